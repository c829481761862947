/**
 * Four-step workflow wiring: mode toggle, style pick (pens re-derive from the
 * legend), draw/upload the control image, generate and display or batch.
 */

import { ApiClient, ApiError, StyleDescriptor } from "./api";
import { BACKGROUND_ID, CanvasState, UnknownColorsError } from "./canvas-state";
import { decodePngRgb, encodePngRgb } from "./png";
import { pollJob } from "./poll";
import { unzipStored } from "./unzip";

const SCALE = 10; // display pixels per raster pixel

type Mode = "single" | "multiple";

interface AppState {
  mode: Mode;
  styles: StyleDescriptor[];
  styleId: string | null;
  canvas: CanvasState | null;
  batchFiles: File[];
  lastSeed: number | null;
}

const state: AppState = {
  mode: "single",
  styles: [],
  styleId: null,
  canvas: null,
  batchFiles: [],
  lastSeed: null,
};

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new ApiClient("");

function showError(message: string, colors: [number, number, number][] = []): void {
  const box = $("errors");
  box.textContent = message;
  box.classList.remove("hidden");
  for (const c of colors) {
    const chip = document.createElement("span");
    chip.className = "swatch";
    chip.style.backgroundColor = `rgb(${c.join(",")})`;
    chip.title = `(${c.join(",")})`;
    box.appendChild(chip);
  }
}

function clearError(): void {
  const box = $("errors");
  box.textContent = "";
  box.classList.add("hidden");
}

function currentStyle(): StyleDescriptor | null {
  return state.styles.find((s) => s.id === state.styleId) ?? null;
}

function repaint(): void {
  const canvasEl = $<HTMLCanvasElement>("paint");
  const ctx = canvasEl.getContext("2d");
  const model = state.canvas;
  if (!ctx || !model) return;
  ctx.imageSmoothingEnabled = false;
  const img = ctx.createImageData(model.size, model.size);
  const rgb = model.exportRGB();
  for (let i = 0; i < model.size * model.size; i++) {
    img.data[i * 4] = rgb[i * 3];
    img.data[i * 4 + 1] = rgb[i * 3 + 1];
    img.data[i * 4 + 2] = rgb[i * 3 + 2];
    img.data[i * 4 + 3] = 255;
  }
  const off = document.createElement("canvas");
  off.width = off.height = model.size;
  off.getContext("2d")!.putImageData(img, 0, 0);
  ctx.clearRect(0, 0, canvasEl.width, canvasEl.height);
  ctx.drawImage(off, 0, 0, canvasEl.width, canvasEl.height);
}

function rebuildPens(): void {
  const style = currentStyle();
  const panel = $("pens");
  panel.innerHTML = "";
  const model = state.canvas;
  if (!style || !model) return;
  for (const entry of style.legend) {
    const btn = document.createElement("button");
    btn.className = "pen" + (model.activeClass === entry.class_id ? " active" : "");
    btn.title = entry.name;
    const chip = document.createElement("span");
    chip.className = "swatch";
    chip.style.backgroundColor = `rgb(${entry.control_color.join(",")})`;
    btn.append(chip, document.createTextNode(entry.name));
    btn.addEventListener("click", () => {
      model.activeClass = entry.class_id;
      model.penSize = entry.default_pen_width;
      $<HTMLInputElement>("pen-size").value = String(entry.default_pen_width);
      rebuildPens();
    });
    panel.appendChild(btn);
  }
}

function setStyle(styleId: string): void {
  const prev = currentStyle();
  const next = state.styles.find((s) => s.id === styleId);
  if (!next) return;
  if (state.canvas && prev && prev.id !== next.id) {
    const missing = state.canvas.legendDiff(next.legend);
    if (missing.length > 0) {
      const names = missing
        .map((c) => prev.legend.find((e) => e.class_id === c)?.name ?? `class ${c}`)
        .join(", ");
      showError(`Drawn classes not in the ${next.display_name} legend: ${names}. ` +
        "Erase them or they will be rejected at generation.");
    } else {
      clearError();
    }
  }
  state.styleId = styleId;
  state.canvas?.setLegend(next.legend);
  document.querySelectorAll<HTMLButtonElement>("#styles button").forEach((b) => {
    b.classList.toggle("active", b.dataset.styleId === styleId);
  });
  rebuildPens();
  repaint();
}

function setMode(mode: Mode): void {
  state.mode = mode;
  $("single-panel").classList.toggle("hidden", mode !== "single");
  $("batch-panel").classList.toggle("hidden", mode !== "multiple");
  document.querySelectorAll<HTMLButtonElement>("#modes button").forEach((b) => {
    b.classList.toggle("active", b.dataset.mode === mode);
  });
}

function canvasPos(e: MouseEvent): [number, number] {
  const el = $<HTMLCanvasElement>("paint");
  const rect = el.getBoundingClientRect();
  const model = state.canvas!;
  const x = Math.floor(((e.clientX - rect.left) / rect.width) * model.size);
  const y = Math.floor(((e.clientY - rect.top) / rect.height) * model.size);
  return [Math.max(0, Math.min(model.size - 1, x)), Math.max(0, Math.min(model.size - 1, y))];
}

function wirePainting(): void {
  const el = $<HTMLCanvasElement>("paint");
  let drawing = false;
  let last: [number, number] | null = null;
  el.addEventListener("mousedown", (e) => {
    const model = state.canvas;
    if (!model) return;
    drawing = true;
    model.beginStroke();
    const [x, y] = canvasPos(e);
    model.stamp(x, y);
    last = [x, y];
    repaint();
  });
  el.addEventListener("mousemove", (e) => {
    const model = state.canvas;
    if (!drawing || !model || !last) return;
    const [x, y] = canvasPos(e);
    model.line(last[0], last[1], x, y);
    last = [x, y];
    repaint();
  });
  const stop = () => {
    state.canvas?.endStroke();
    drawing = false;
    last = null;
  };
  el.addEventListener("mouseup", stop);
  el.addEventListener("mouseleave", stop);
}

async function importUpload(file: File): Promise<void> {
  const model = state.canvas;
  if (!model) return;
  try {
    const decoded = await decodePngRgb(new Uint8Array(await file.arrayBuffer()));
    model.importRGB(decoded.rgb, decoded.width, decoded.height);
    clearError();
    repaint();
  } catch (err) {
    if (err instanceof UnknownColorsError) {
      showError(`Upload has ${err.pixelCount} pixel(s) outside the legend:`, err.colors);
    } else {
      showError(String(err));
    }
  }
}

async function generateSingle(): Promise<void> {
  const model = state.canvas;
  const style = currentStyle();
  if (!model || !style) return;
  clearError();
  const seedInput = $<HTMLInputElement>("seed").value.trim();
  const png = encodePngRgb(model.size, model.size, model.exportRGB());
  $("generate").setAttribute("disabled", "true");
  try {
    const res = await api.generate(png, style.id, {
      seed: seedInput === "" ? undefined : Number(seedInput),
      postproc: $<HTMLInputElement>("postproc").checked,
    });
    state.lastSeed = res.seed;
    const blob = new Blob([res.png as BlobPart], { type: "image/png" });
    const img = $<HTMLImageElement>("result");
    img.src = URL.createObjectURL(blob);
    img.classList.remove("hidden");
    $("seed-used").textContent = `seed ${res.seed}`;
  } catch (err) {
    if (err instanceof ApiError) {
      const detail = err.detail as { error?: string; unknown_colors?: [number, number, number][] };
      showError(detail?.error ?? String(err), detail?.unknown_colors ?? []);
    } else {
      showError(String(err));
    }
  } finally {
    $("generate").removeAttribute("disabled");
  }
}

async function generateBatch(): Promise<void> {
  const style = currentStyle();
  if (!style || state.batchFiles.length === 0) {
    showError("Pick a style and upload control tiles first.");
    return;
  }
  clearError();
  const pngs: Uint8Array[] = [];
  for (const f of state.batchFiles) pngs.push(new Uint8Array(await f.arrayBuffer()));
  const bar = $<HTMLProgressElement>("job-progress");
  bar.classList.remove("hidden");
  try {
    const job = await api.createJob(pngs, style.id, {});
    const final = await pollJob(api, job.job_id, {
      intervalMs: 400,
      onProgress: (s) => {
        bar.max = s.total;
        bar.value = s.done;
        $("job-state").textContent = `${s.state}: ${s.done}/${s.total}`;
      },
    });
    if (final.state === "failed") {
      showError(`Job failed: ${final.error}`);
      return;
    }
    const archive = await api.downloadJob(job.job_id);
    const link = $<HTMLAnchorElement>("download");
    link.href = URL.createObjectURL(new Blob([archive as BlobPart], { type: "application/zip" }));
    link.download = "tiles.zip";
    link.classList.remove("hidden");
    const stitched = unzipStored(archive).find((e) => e.name === "stitched.png");
    if (stitched) {
      const img = $<HTMLImageElement>("stitched");
      img.src = URL.createObjectURL(new Blob([stitched.data as BlobPart], { type: "image/png" }));
      img.classList.remove("hidden");
    }
  } catch (err) {
    showError(err instanceof ApiError ? JSON.stringify(err.detail) : String(err));
  }
}

export async function boot(): Promise<void> {
  state.styles = await api.listStyles();
  const tile = state.styles[0]?.tile_size ?? 64;
  const first = state.styles[0];
  state.canvas = new CanvasState(tile, first ? first.legend : []);
  const paint = $<HTMLCanvasElement>("paint");
  paint.width = paint.height = tile * SCALE;

  const styleBox = $("styles");
  for (const s of state.styles) {
    const btn = document.createElement("button");
    btn.textContent = s.display_name;
    btn.dataset.styleId = s.id;
    btn.addEventListener("click", () => setStyle(s.id));
    styleBox.appendChild(btn);
  }
  document.querySelectorAll<HTMLButtonElement>("#modes button").forEach((b) => {
    b.addEventListener("click", () => setMode(b.dataset.mode as Mode));
  });
  $("pen-size").addEventListener("input", (e) => {
    if (state.canvas) state.canvas.penSize = Number((e.target as HTMLInputElement).value);
  });
  $("eraser").addEventListener("click", () => {
    if (state.canvas) state.canvas.activeClass = BACKGROUND_ID;
    rebuildPens();
  });
  $("undo").addEventListener("click", () => {
    state.canvas?.undo();
    repaint();
  });
  $("clear").addEventListener("click", () => {
    state.canvas?.clear();
    repaint();
  });
  $<HTMLInputElement>("upload").addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (file) void importUpload(file);
  });
  $<HTMLInputElement>("batch-upload").addEventListener("change", (e) => {
    state.batchFiles = Array.from((e.target as HTMLInputElement).files ?? []);
    $("batch-count").textContent = `${state.batchFiles.length} tile(s) selected`;
  });
  $("generate").addEventListener("click", () => {
    void (state.mode === "single" ? generateSingle() : generateBatch());
  });

  wirePainting();
  if (first) setStyle(first.id);
  setMode("single");
  repaint();
}

if (typeof document !== "undefined" && document.getElementById("paint")) {
  void boot();
}
