/**
 * DOM-free canvas model: a square raster of class labels painted with
 * hard-edged square pens (no anti-aliasing, so exports stay legend-exact),
 * with stroke-granular undo.
 */

export interface LegendEntry {
  class_id: number;
  name: string;
  control_color: [number, number, number];
  default_pen_width: number;
}

export const BACKGROUND_ID = 0;

const MAX_UNDO = 64;

export class UnknownColorsError extends Error {
  constructor(
    public readonly colors: [number, number, number][],
    public readonly pixelCount: number,
  ) {
    super(`${pixelCount} pixel(s) with unknown colors: ${colors.slice(0, 8).map((c) => `(${c.join(",")})`).join(" ")}`);
  }
}

export class CanvasState {
  readonly size: number;
  labels: Uint8Array;
  activeClass: number = BACKGROUND_ID;
  penSize: number = 3;
  private undoStack: Uint8Array[] = [];
  private strokeOpen = false;

  constructor(size: number, private legend: LegendEntry[]) {
    this.size = size;
    this.labels = new Uint8Array(size * size).fill(BACKGROUND_ID);
    this.setLegend(legend);
  }

  setLegend(legend: LegendEntry[]): void {
    if (!legend.some((e) => e.class_id === BACKGROUND_ID)) {
      throw new Error("legend must contain the background class");
    }
    this.legend = legend;
    if (!legend.some((e) => e.class_id === this.activeClass)) {
      this.activeClass = BACKGROUND_ID;
    }
  }

  getLegend(): LegendEntry[] {
    return this.legend;
  }

  colorOf(classId: number): [number, number, number] {
    const entry = this.legend.find((e) => e.class_id === classId);
    if (!entry) throw new Error(`class ${classId} not in legend`);
    return entry.control_color;
  }

  /** Snapshot for undo; call once per pointer-down. */
  beginStroke(): void {
    if (this.strokeOpen) return;
    this.strokeOpen = true;
    this.undoStack.push(this.labels.slice());
    if (this.undoStack.length > MAX_UNDO) this.undoStack.shift();
  }

  endStroke(): void {
    this.strokeOpen = false;
  }

  /** Square stamp like the server brush: offsets -((w-1)>>1) .. w>>1. */
  stamp(x: number, y: number): void {
    const lo = -((this.penSize - 1) >> 1);
    const hi = this.penSize >> 1;
    for (let oy = lo; oy <= hi; oy++) {
      for (let ox = lo; ox <= hi; ox++) {
        const px = x + ox;
        const py = y + oy;
        if (px >= 0 && px < this.size && py >= 0 && py < this.size) {
          this.labels[py * this.size + px] = this.activeClass;
        }
      }
    }
  }

  /** Stamp along the integer line from (x0,y0) to (x1,y1), inclusive. */
  line(x0: number, y0: number, x1: number, y1: number): void {
    const dx = Math.abs(x1 - x0);
    const dy = Math.abs(y1 - y0);
    const sx = x0 < x1 ? 1 : -1;
    const sy = y0 < y1 ? 1 : -1;
    let err = dx - dy;
    let x = x0;
    let y = y0;
    for (;;) {
      this.stamp(x, y);
      if (x === x1 && y === y1) break;
      const e2 = 2 * err;
      if (e2 > -dy) {
        err -= dy;
        x += sx;
      }
      if (e2 < dx) {
        err += dx;
        y += sy;
      }
    }
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.labels = prev;
    this.strokeOpen = false;
    return true;
  }

  clear(): void {
    this.beginStroke();
    this.labels.fill(BACKGROUND_ID);
    this.endStroke();
  }

  classesUsed(): Set<number> {
    const used = new Set<number>();
    for (const v of this.labels) used.add(v);
    return used;
  }

  /** Painted classes that a new legend would not accept. */
  legendDiff(newLegend: LegendEntry[]): number[] {
    const allowed = new Set(newLegend.map((e) => e.class_id));
    return [...this.classesUsed()].filter((c) => !allowed.has(c)).sort((a, b) => a - b);
  }

  /** Legend-exact RGB export (size*size*3 bytes, row-major). */
  exportRGB(): Uint8Array {
    const lut = new Map(this.legend.map((e) => [e.class_id, e.control_color]));
    const out = new Uint8Array(this.size * this.size * 3);
    for (let i = 0; i < this.labels.length; i++) {
      const rgb = lut.get(this.labels[i]);
      if (!rgb) throw new Error(`painted class ${this.labels[i]} missing from legend`);
      out[i * 3] = rgb[0];
      out[i * 3 + 1] = rgb[1];
      out[i * 3 + 2] = rgb[2];
    }
    return out;
  }

  /** Import an RGB raster; every pixel must match a legend color exactly. */
  importRGB(pixels: Uint8Array, width: number, height: number): void {
    if (width !== this.size || height !== this.size) {
      throw new Error(`expected ${this.size}x${this.size}, got ${width}x${height}`);
    }
    const lut = new Map<number, number>();
    for (const e of this.legend) {
      const [r, g, b] = e.control_color;
      lut.set((r << 16) | (g << 8) | b, e.class_id);
    }
    const next = new Uint8Array(this.size * this.size);
    const unknown = new Map<number, number>();
    for (let i = 0; i < next.length; i++) {
      const key = (pixels[i * 3] << 16) | (pixels[i * 3 + 1] << 8) | pixels[i * 3 + 2];
      const cls = lut.get(key);
      if (cls === undefined) {
        unknown.set(key, (unknown.get(key) ?? 0) + 1);
      } else {
        next[i] = cls;
      }
    }
    if (unknown.size > 0) {
      let count = 0;
      const colors: [number, number, number][] = [];
      for (const [key, n] of unknown) {
        colors.push([(key >> 16) & 255, (key >> 8) & 255, key & 255]);
        count += n;
      }
      throw new UnknownColorsError(colors, count);
    }
    this.beginStroke();
    this.labels = next;
    this.endStroke();
  }
}
