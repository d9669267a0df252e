/** Fixed categorical palette keyed by class index; must stay deterministic
 * so re-rendering the same state always produces the same colors. Mirrors
 * the palette the dataset generator uses for thumbnails. */

const PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
  [140, 86, 75],
  [227, 119, 194],
  [127, 127, 127],
  [188, 189, 34],
  [23, 190, 207],
  [174, 199, 232],
  [255, 187, 120],
];

export function classColor(classIndex: number): string {
  const [r, g, b] = PALETTE[classIndex % PALETTE.length]!;
  return `rgb(${r},${g},${b})`;
}

export const PENDING_OUTLINE = "#ffffff";
export const ANNOTATED_OUTLINE = "#000000";
export const PALETTE_SIZE = PALETTE.length;
