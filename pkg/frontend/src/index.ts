export * from "./types.js";
export * from "./timeline.js";
export * from "./client.js";
export * from "./render.js";
