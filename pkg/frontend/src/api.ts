// Typed client for the assistant's JSON API. All methods throw ApiError on
// non-2xx responses, carrying the server's {code, message, retriable} body.

export interface ProfileResponse {
  user: string;
  profile: string;
  origin: "generated" | "edited" | null;
  updated_at: string | null;
  code: string | null;
}

export interface TrendingPaper {
  id: string;
  title: string;
  published: string;
  score: number;
  source: string;
}

export interface TrendsResponse {
  user: string;
  range: "day" | "week" | "all";
  trending_papers: TrendingPaper[];
  topics: string;
  ideas: string;
  generated_at: string;
}

export interface ChatResponse {
  exchange_id: string;
  user: string;
  question: string;
  answer_augmented: string;
  answer_plain: string;
  created_at: string;
}

export interface FeedbackResponse {
  exchange_id: string;
  kept: "plain" | "augmented";
}

export interface CommentResponse {
  ack: boolean;
  mean_minutes: number;
}

export interface SignupResponse {
  ack: boolean;
  user: string;
}

export type Verdict = "like" | "dislike";
export type TimeRange = "day" | "week" | "all";

export class ApiError extends Error {
  readonly code: string;
  readonly retriable: boolean;
  readonly status: number;

  constructor(status: number, code: string, message: string, retriable: boolean) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.retriable = retriable;
  }
}

async function request<T>(method: string, path: string, body?: object): Promise<T> {
  const init: RequestInit = { method, headers: {} };
  if (body !== undefined) {
    init.headers = { "Content-Type": "application/json" };
    init.body = JSON.stringify(body);
  }
  const response = await fetch(path, init);
  if (!response.ok) {
    let code = "HTTP_ERROR";
    let message = `request failed with status ${response.status}`;
    let retriable = response.status >= 500;
    try {
      const payload = await response.json();
      if (payload && typeof payload.code === "string") {
        code = payload.code;
        message = payload.message;
        retriable = Boolean(payload.retriable);
      }
    } catch {
      // keep the generic error when the body is not the standard shape
    }
    throw new ApiError(response.status, code, message, retriable);
  }
  return (await response.json()) as T;
}

export function setProfile(name: string): Promise<ProfileResponse> {
  return request<ProfileResponse>("POST", "/profile", { name });
}

export function editProfile(name: string, text: string): Promise<ProfileResponse> {
  return request<ProfileResponse>("PUT", "/profile", { name, text });
}

export function fetchTrends(name: string, range: TimeRange): Promise<TrendsResponse> {
  const query = `name=${encodeURIComponent(name)}&range=${encodeURIComponent(range)}`;
  return request<TrendsResponse>("GET", `/trends?${query}`);
}

export function sendChat(name: string, question: string): Promise<ChatResponse> {
  return request<ChatResponse>("POST", "/chat", { name, question });
}

export function sendFeedback(exchangeId: string, verdict: Verdict): Promise<FeedbackResponse> {
  return request<FeedbackResponse>("POST", `/chat/${encodeURIComponent(exchangeId)}/feedback`, {
    verdict,
  });
}

export function sendComment(name: string, minutes: number): Promise<CommentResponse> {
  return request<CommentResponse>("POST", "/comment", { name, minutes });
}

export function signUp(name: string, email: string): Promise<SignupResponse> {
  return request<SignupResponse>("POST", "/signup", { name, email });
}

// Bundle used by the panels so tests can substitute fakes without touching fetch.
export interface ApiClient {
  setProfile: typeof setProfile;
  editProfile: typeof editProfile;
  fetchTrends: typeof fetchTrends;
  sendChat: typeof sendChat;
  sendFeedback: typeof sendFeedback;
  sendComment: typeof sendComment;
  signUp: typeof signUp;
}

export const apiClient: ApiClient = {
  setProfile,
  editProfile,
  fetchTrends,
  sendChat,
  sendFeedback,
  sendComment,
  signUp,
};
