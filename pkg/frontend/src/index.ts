export * from "./api.js";
export * from "./feed.js";
export * from "./monitor.js";
export * from "./negotiate.js";
export * from "./trends.js";
export * from "./playback.js";
export * from "./state.js";
