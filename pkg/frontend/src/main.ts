import { CompletionClient } from "./client.js";
import { setupApp } from "./app.js";

// Served by `codecomplete serve --static`, so the API lives at the same origin.
setupApp(document, new CompletionClient("", 150));
