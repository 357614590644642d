// Browser entry point. Endpoint locations come from query parameters so the
// built assets stay static: ?orchestrator=http://host:port&serving=http://host:port
// Defaults match the CLI's defaults for a local stack.

import { ConsoleApi } from "./api.js";
import { ConsoleApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const api = new ConsoleApi({
  orchestratorUrl: params.get("orchestrator") ?? "http://127.0.0.1:8600",
  servingUrl: params.get("serving") ?? "http://127.0.0.1:8602",
});
const interval = Number(params.get("interval") ?? "2000");

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
const app = new ConsoleApp(root, api, { pollIntervalMs: interval });
app.start();
