// The three page panels: profile set/edit, trends with time range + sign-up,
// and chat with dual answers and feedback. Each panel owns one in-flight
// request at a time and renders a Retry control when a request fails.

import type { ApiClient, TimeRange, TrendsResponse, Verdict } from "./api.js";
import { ApiError } from "./api.js";
import type { UiSession } from "./state.js";

const EMPTY_PAPERS_TEXT = "No papers in this time range.";
const NO_PUBLICATIONS_HINT =
  "No publications were found for this name. Edit the profile below by hand, then click Edit Profile.";
const NO_USER_MESSAGE = "Set your profile first.";

type AsyncAction = () => Promise<void>;

interface PanelShell {
  root: HTMLElement;
  body: HTMLDivElement;
  /** Run one request for this panel; ignored while another is in flight. */
  run(action: AsyncAction): Promise<void>;
  /** Show a local (non-request) error without a Retry control. */
  showNotice(message: string): void;
  busy(): boolean;
  /** Register a hook re-applying per-control disabled rules after busy flips. */
  onSync(hook: () => void): void;
}

function createPanelShell(title: string, className: string): PanelShell {
  const root = document.createElement("section");
  root.className = `panel ${className}`;

  const heading = document.createElement("h2");
  heading.textContent = title;
  root.appendChild(heading);

  const body = document.createElement("div");
  body.className = "panel-body";
  root.appendChild(body);

  const status = document.createElement("div");
  status.className = "panel-status";
  root.appendChild(status);

  let inFlight = false;
  let lastAction: AsyncAction | null = null;
  const syncHooks: Array<() => void> = [];

  function sync(): void {
    root.classList.toggle("loading", inFlight);
    for (const button of Array.from(root.querySelectorAll("button"))) {
      button.disabled = inFlight;
    }
    for (const hook of syncHooks) {
      hook();
    }
  }

  function clearStatus(): void {
    status.textContent = "";
    status.className = "panel-status";
  }

  function showLoading(): void {
    clearStatus();
    status.classList.add("is-loading");
    const note = document.createElement("span");
    note.className = "loading-note";
    note.textContent = "Loading…";
    status.appendChild(note);
  }

  function showError(message: string): void {
    clearStatus();
    status.classList.add("has-error");
    const note = document.createElement("span");
    note.className = "error";
    note.textContent = message;
    status.appendChild(note);

    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => {
      if (lastAction) {
        void run(lastAction);
      }
    });
    status.appendChild(retry);
  }

  async function run(action: AsyncAction): Promise<void> {
    if (inFlight) {
      return;
    }
    inFlight = true;
    lastAction = action;
    showLoading();
    sync();
    try {
      await action();
      clearStatus();
    } catch (err) {
      const message =
        err instanceof ApiError
          ? `${err.message} (${err.code})`
          : err instanceof Error
            ? err.message
            : String(err);
      showError(message);
    } finally {
      inFlight = false;
      sync();
    }
  }

  function showNotice(message: string): void {
    clearStatus();
    status.classList.add("has-error");
    const note = document.createElement("span");
    note.className = "error";
    note.textContent = message;
    status.appendChild(note);
  }

  return {
    root,
    body,
    run,
    showNotice,
    busy: () => inFlight,
    onSync: (hook) => {
      syncHooks.push(hook);
      hook();
    },
  };
}

function labeled(text: string, control: HTMLElement): HTMLLabelElement {
  const label = document.createElement("label");
  const caption = document.createElement("span");
  caption.className = "caption";
  caption.textContent = text;
  label.appendChild(caption);
  label.appendChild(control);
  return label;
}

function button(label: string, className: string, onClick: () => void): HTMLButtonElement {
  const el = document.createElement("button");
  el.type = "button";
  el.className = className;
  el.textContent = label;
  el.addEventListener("click", onClick);
  return el;
}

export function buildProfilePanel(api: ApiClient, session: UiSession): HTMLElement {
  const shell = createPanelShell("Set your profile!", "profile-panel");

  const nameInput = document.createElement("input");
  nameInput.type = "text";
  nameInput.className = "profile-name";

  const profileBox = document.createElement("textarea");
  profileBox.className = "profile-text";
  profileBox.rows = 10;

  const originBadge = document.createElement("span");
  originBadge.className = "profile-origin";

  const hint = document.createElement("p");
  hint.className = "profile-hint";
  hint.hidden = true;
  hint.textContent = NO_PUBLICATIONS_HINT;

  const setButton = button("Set Profile", "set-profile", () => {
    const name = nameInput.value.trim();
    if (!name) {
      return;
    }
    void shell.run(async () => {
      const res = await api.setProfile(name);
      session.setUser(res.user);
      profileBox.value = res.profile;
      originBadge.textContent = res.origin ?? "";
      hint.hidden = res.code !== "NO_PUBLICATIONS";
    });
  });

  const editButton = button("Edit Profile", "edit-profile", () => {
    const name = nameInput.value.trim();
    if (!name) {
      return;
    }
    void shell.run(async () => {
      const res = await api.editProfile(name, profileBox.value);
      session.setUser(res.user);
      profileBox.value = res.profile;
      originBadge.textContent = res.origin ?? "";
      hint.hidden = true;
    });
  });

  const syncButtons = () => {
    const blank = nameInput.value.trim() === "";
    setButton.disabled = shell.busy() || blank;
    editButton.disabled = shell.busy() || blank;
  };
  nameInput.addEventListener("input", syncButtons);
  shell.onSync(syncButtons);

  shell.body.appendChild(labeled("Input your name:", nameInput));
  shell.body.appendChild(setButton);
  shell.body.appendChild(labeled("Generated profile (can be edited):", profileBox));
  shell.body.appendChild(originBadge);
  shell.body.appendChild(hint);
  shell.body.appendChild(editButton);
  return shell.root;
}

function renderTrends(container: HTMLElement, res: TrendsResponse): void {
  container.textContent = "";

  const papersBox = document.createElement("div");
  papersBox.className = "trend-box trend-papers";
  papersBox.appendChild(Object.assign(document.createElement("h3"), { textContent: "Trending Papers" }));
  if (res.trending_papers.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = EMPTY_PAPERS_TEXT;
    papersBox.appendChild(empty);
  } else {
    const list = document.createElement("ol");
    for (const paper of res.trending_papers) {
      const item = document.createElement("li");
      item.className = "trend-paper";
      item.textContent = `${paper.title} (${paper.published})`;
      list.appendChild(item);
    }
    papersBox.appendChild(list);
  }

  const topicsBox = document.createElement("div");
  topicsBox.className = "trend-box trend-topics";
  topicsBox.appendChild(Object.assign(document.createElement("h3"), { textContent: "Trending Topics" }));
  const topicsText = document.createElement("p");
  topicsText.textContent = res.topics;
  topicsBox.appendChild(topicsText);

  const ideasBox = document.createElement("div");
  ideasBox.className = "trend-box trend-ideas";
  ideasBox.appendChild(
    Object.assign(document.createElement("h3"), { textContent: "Ideas for Trending Topic" }),
  );
  const ideasText = document.createElement("p");
  ideasText.textContent = res.ideas;
  ideasBox.appendChild(ideasText);

  container.appendChild(papersBox);
  container.appendChild(topicsBox);
  container.appendChild(ideasBox);
}

export function buildTrendsPanel(api: ApiClient, session: UiSession): HTMLElement {
  const shell = createPanelShell("Get trending topics and ideas!", "trends-panel");

  const emailInput = document.createElement("input");
  emailInput.type = "email";
  emailInput.className = "signup-email";

  const signupNote = document.createElement("span");
  signupNote.className = "signup-note";

  const signupButton = button("Sign Up", "sign-up", () => {
    if (!session.userName) {
      shell.showNotice(NO_USER_MESSAGE);
      return;
    }
    const name = session.userName;
    const email = emailInput.value.trim();
    if (!email) {
      return;
    }
    void shell.run(async () => {
      const res = await api.signUp(name, email);
      signupNote.textContent = `Signed up ${res.user} for the weekly report.`;
    });
  });

  const rangeSelect = document.createElement("select");
  rangeSelect.className = "range-select";
  for (const value of ["day", "week", "all"] as const) {
    const option = document.createElement("option");
    option.value = value;
    option.textContent = value;
    rangeSelect.appendChild(option);
  }
  rangeSelect.value = "week";

  const results = document.createElement("div");
  results.className = "trend-results";

  const confirmButton = button("Confirm", "confirm", () => {
    if (!session.userName) {
      shell.showNotice(NO_USER_MESSAGE);
      return;
    }
    const name = session.userName;
    const range = rangeSelect.value as TimeRange;
    void shell.run(async () => {
      const res = await api.fetchTrends(name, range);
      renderTrends(results, res);
    });
  });

  shell.body.appendChild(
    labeled("Sign up with email to receive the weekly update:", emailInput),
  );
  shell.body.appendChild(signupButton);
  shell.body.appendChild(signupNote);
  shell.body.appendChild(labeled("Time range:", rangeSelect));
  shell.body.appendChild(confirmButton);
  shell.body.appendChild(results);
  return shell.root;
}

export function buildChatPanel(api: ApiClient, session: UiSession): HTMLElement {
  const shell = createPanelShell("Advisory research chat!", "chat-panel");

  const transcriptBox = document.createElement("div");
  transcriptBox.className = "chat-transcript";

  function renderTranscript(): void {
    transcriptBox.textContent = "";
    for (const entry of session.transcript.list()) {
      const block = document.createElement("div");
      block.className = "chat-entry";
      block.dataset.exchangeId = entry.exchangeId;

      const question = document.createElement("p");
      question.className = "chat-question";
      question.textContent = entry.question;
      block.appendChild(question);

      for (const answer of session.transcript.visibleAnswers(entry.exchangeId)) {
        const answerBox = document.createElement("div");
        answerBox.className = "chat-answer";
        answerBox.dataset.kind = answer.kind;

        const tag = document.createElement("span");
        tag.className = "answer-tag";
        tag.textContent =
          answer.kind === "augmented"
            ? "Answer 1 (thought + paper retrieval)"
            : "Answer 2 (paper retrieval only)";
        answerBox.appendChild(tag);

        const text = document.createElement("p");
        text.textContent = answer.text;
        answerBox.appendChild(text);

        if (answer.awaitingFeedback) {
          for (const verdict of ["like", "dislike"] as const) {
            const feedback = button(verdict, "feedback", () => {
              sendVerdict(entry.exchangeId, verdict);
            });
            feedback.dataset.verdict = verdict;
            answerBox.appendChild(feedback);
          }
        }
        block.appendChild(answerBox);
      }
      transcriptBox.appendChild(block);
    }
  }

  function sendVerdict(exchangeId: string, verdict: Verdict): void {
    const entry = session.transcript.get(exchangeId);
    if (!entry || entry.verdict !== null) {
      return; // feedback already recorded; never emit a second verdict
    }
    void shell.run(async () => {
      await api.sendFeedback(exchangeId, verdict);
      session.transcript.applyVerdict(exchangeId, verdict);
      renderTranscript();
    });
  }

  const questionInput = document.createElement("input");
  questionInput.type = "text";
  questionInput.className = "chat-input";

  const sendButton = button("Send", "send", () => {
    if (!session.userName) {
      shell.showNotice(NO_USER_MESSAGE);
      return;
    }
    const name = session.userName;
    const question = questionInput.value.trim();
    if (!question) {
      return;
    }
    void shell.run(async () => {
      const res = await api.sendChat(name, question);
      session.transcript.add({
        exchangeId: res.exchange_id,
        question: res.question,
        answerAugmented: res.answer_augmented,
        answerPlain: res.answer_plain,
      });
      questionInput.value = "";
      renderTranscript();
    });
  });
  questionInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      sendButton.click();
    }
  });

  const clearButton = button("Clear", "clear", () => {
    session.transcript.clear();
    renderTranscript();
  });

  const minutesInput = document.createElement("input");
  minutesInput.type = "number";
  minutesInput.min = "0";
  minutesInput.className = "comment-minutes";

  const commentNote = document.createElement("span");
  commentNote.className = "comment-note";

  const commentButton = button("Comment", "comment", () => {
    if (!session.userName) {
      shell.showNotice(NO_USER_MESSAGE);
      return;
    }
    const name = session.userName;
    const minutes = Number(minutesInput.value);
    if (!Number.isFinite(minutes) || minutesInput.value.trim() === "") {
      return;
    }
    void shell.run(async () => {
      const res = await api.sendComment(name, minutes);
      commentNote.textContent = `Thanks! Reported average time saved: ${res.mean_minutes} minutes.`;
    });
  });

  shell.body.appendChild(transcriptBox);
  shell.body.appendChild(labeled("Your question:", questionInput));
  shell.body.appendChild(sendButton);
  shell.body.appendChild(clearButton);
  shell.body.appendChild(labeled("Minutes saved:", minutesInput));
  shell.body.appendChild(commentButton);
  shell.body.appendChild(commentNote);
  return shell.root;
}
