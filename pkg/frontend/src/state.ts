// Local chat transcript state. The server keeps its own ledger; this mirrors
// just what the page displays, so Clear only empties the local view.

import type { Verdict } from "./api.js";

export interface ChatEntry {
  exchangeId: string;
  question: string;
  answerAugmented: string;
  answerPlain: string;
  verdict: Verdict | null;
}

export interface VisibleAnswer {
  kind: "augmented" | "plain";
  text: string;
  awaitingFeedback: boolean;
}

export class Transcript {
  private entries: ChatEntry[] = [];

  add(entry: Omit<ChatEntry, "verdict">): ChatEntry {
    const stored: ChatEntry = { ...entry, verdict: null };
    this.entries.push(stored);
    return stored;
  }

  get(exchangeId: string): ChatEntry | undefined {
    return this.entries.find((e) => e.exchangeId === exchangeId);
  }

  list(): readonly ChatEntry[] {
    return this.entries;
  }

  /**
   * Record feedback for an exchange. Each exchange accepts feedback exactly
   * once; a second verdict (or a verdict for an unknown exchange) throws.
   */
  applyVerdict(exchangeId: string, verdict: Verdict): ChatEntry {
    const entry = this.get(exchangeId);
    if (!entry) {
      throw new Error(`unknown exchange: ${exchangeId}`);
    }
    if (entry.verdict !== null) {
      throw new Error(`feedback already recorded for exchange: ${exchangeId}`);
    }
    entry.verdict = verdict;
    return entry;
  }

  /** Drop the local view. Does not touch the server. */
  clear(): void {
    this.entries = [];
  }

  /**
   * Answers still on display for an exchange. Before feedback both answers
   * show (augmented first, then plain, which carries the feedback buttons).
   * "like" keeps the plain answer on screen; "dislike" keeps the augmented one.
   */
  visibleAnswers(exchangeId: string): VisibleAnswer[] {
    const entry = this.get(exchangeId);
    if (!entry) {
      return [];
    }
    if (entry.verdict === null) {
      return [
        { kind: "augmented", text: entry.answerAugmented, awaitingFeedback: false },
        { kind: "plain", text: entry.answerPlain, awaitingFeedback: true },
      ];
    }
    if (entry.verdict === "like") {
      return [{ kind: "plain", text: entry.answerPlain, awaitingFeedback: false }];
    }
    return [{ kind: "augmented", text: entry.answerAugmented, awaitingFeedback: false }];
  }
}

/** Shared page state: the active user and the chat transcript. */
export class UiSession {
  userName: string | null = null;
  readonly transcript = new Transcript();

  setUser(name: string): void {
    this.userName = name;
  }
}
