/** Trailing-edge debounce: however many calls arrive inside the window,
 * only the last one runs, one window after the most recent call. */
export type Debounced<A extends unknown[]> = {
  (...args: A): void;
  cancel(): void;
  pending(): boolean;
};

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let handle: ReturnType<typeof setTimeout> | null = null;

  const wrapped = (...args: A) => {
    if (handle !== null) clearTimeout(handle);
    handle = setTimeout(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };

  wrapped.cancel = () => {
    if (handle !== null) clearTimeout(handle);
    handle = null;
  };
  wrapped.pending = () => handle !== null;
  return wrapped;
}
