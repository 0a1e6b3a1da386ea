import { apiClient } from "./api.js";
import { buildChatPanel, buildProfilePanel, buildTrendsPanel } from "./panels.js";
import { UiSession } from "./state.js";

export function mountApp(root: HTMLElement): UiSession {
  const session = new UiSession();
  root.appendChild(buildProfilePanel(apiClient, session));
  root.appendChild(buildTrendsPanel(apiClient, session));
  root.appendChild(buildChatPanel(apiClient, session));
  return session;
}

const appRoot = document.getElementById("app");
if (appRoot) {
  mountApp(appRoot);
}
