import { readFileSync } from "node:fs";
import { join } from "node:path";

/** Inject the <main> skeleton from index.html into the test document so
 * bindUi resolves the same element ids the shipped page has. The test
 * runner's working directory is the frontend root, next to index.html. */
export function loadSkeleton(doc: Document): void {
  const htmlPath = join(process.cwd(), "index.html");
  const html = readFileSync(htmlPath, "utf8");
  const match = html.match(/<main[\s\S]*<\/main>/);
  if (!match) throw new Error("index.html lost its <main> skeleton");
  doc.body.innerHTML = match[0];
}

/** Poll until a condition holds; hotkey handlers fire async work that the
 * tests can only observe once it settles. */
export async function until(
  check: () => boolean,
  what: string,
  timeoutMs = 5000,
): Promise<void> {
  const start = Date.now();
  while (!check()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

/** Dispatch a keydown the way a curator's keypress would arrive. */
export function press(key: string, target: EventTarget = document, init: KeyboardEventInit = {}): void {
  target.dispatchEvent(
    new KeyboardEvent("keydown", { key, bubbles: true, cancelable: true, ...init }),
  );
}
