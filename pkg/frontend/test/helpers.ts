// Shared DOM-driving helpers for the view tests.

export function mount(): HTMLElement {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

/** Let queued promise callbacks and zero-delay timers run. */
export async function flush(rounds = 4): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

/** Poll until the view settles into the expected state; real HTTP needs
 * wall-clock time, not just microtask turns. */
export async function waitFor(
  what: string,
  predicate: () => boolean,
  timeoutMs = 10000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}`);
}

export function query<T extends HTMLElement>(root: HTMLElement, selector: string): T {
  const el = root.querySelector<T>(selector);
  if (!el) throw new Error(`expected an element matching ${selector}`);
  return el;
}

export function setText(input: HTMLInputElement | HTMLTextAreaElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function selectOption(select: HTMLSelectElement, value: string): void {
  select.value = value;
  select.dispatchEvent(new Event("change", { bubbles: true }));
}

export function attachFile(input: HTMLInputElement, file: File): void {
  Object.defineProperty(input, "files", { value: [file], configurable: true });
  input.dispatchEvent(new Event("change", { bubbles: true }));
}

export function pickRadio(root: HTMLElement, label: string, category: string, value: number): void {
  const radios = [...root.querySelectorAll<HTMLInputElement>("input[type=radio]")];
  const radio = radios.find(
    (r) =>
      r.dataset.label === label && r.dataset.category === category && r.value === String(value),
  );
  if (!radio) throw new Error(`no radio for (${label}, ${category}, ${value})`);
  radio.checked = true;
  radio.dispatchEvent(new Event("change", { bubbles: true }));
}

/** Seeded generator of hostile display strings for injection checks. */
export function adversarialStrings(count: number, seed = 1234): string[] {
  let state = seed >>> 0;
  const rand = () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state / 4294967296;
  };
  const fragments = [
    "<script>window.__pwned = true</script>",
    "<img src=x onerror=\"window.__pwned = true\">",
    "\"'`${}",
    "</div></section>",
    "&lt;&amp;&gt;",
    "line one\nline two\r\n\ttabbed",
    "ünïcødé 音楽 🎹",
    "a]]>b<![CDATA[c",
    "{{constructor}}",
    "  leading and trailing  ",
    "\\u0000 escaped nul",
    "onmouseover=alert(1)",
  ];
  const out: string[] = [];
  for (let i = 0; i < count; i++) {
    const parts = 1 + Math.floor(rand() * 3);
    let text = "";
    for (let j = 0; j < parts; j++) {
      text += fragments[Math.floor(rand() * fragments.length)];
      if (rand() < 0.5) text += ` take ${Math.floor(rand() * 100)} `;
    }
    out.push(text);
  }
  return out;
}
