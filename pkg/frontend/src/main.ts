import { ApiClient, ApiError } from "./api.js";
import { QueueModel } from "./queuePanel.js";
import { collectionOf, lassoSelect, nearestNeighborPurity, PlotPoint } from "./scatter.js";
import { dataUrlToBase64, SearchModel } from "./searchView.js";
import { Session } from "./session.js";

const API_BASE = (window as any).UNVD_API_BASE ?? "http://127.0.0.1:8000";

const session = new Session();
const api = new ApiClient(API_BASE, session);
const queue = new QueueModel(api);
const search = new SearchModel(api, async (url) => {
  const resp = await fetch(url);
  const blob = await resp.blob();
  const dataUrl = await new Promise<string>((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = reject;
    reader.readAsDataURL(blob);
  });
  return dataUrlToBase64(dataUrl);
});

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

// ---- login ------------------------------------------------------------

session.onExpired = () => {
  el("login-panel").style.display = "block";
  el("queue-panel").style.display = "none";
};

el<HTMLFormElement>("login-form").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  const user = el<HTMLInputElement>("login-user").value;
  const pass = el<HTMLInputElement>("login-pass").value;
  try {
    await api.login(user, pass);
    el("login-error").textContent = "";
    el("login-panel").style.display = "none";
    el("queue-panel").style.display = "block";
    startPolling();
  } catch (e) {
    el("login-error").textContent =
      e instanceof ApiError ? `login failed: ${e.message}` : String(e);
  }
});

// ---- queue panel --------------------------------------------------------

let pollTimer: number | null = null;

function startPolling() {
  if (pollTimer !== null) window.clearInterval(pollTimer);
  pollTimer = window.setInterval(async () => {
    if (!session.loggedIn) {
      if (pollTimer !== null) window.clearInterval(pollTimer);
      pollTimer = null;
      return;
    }
    try {
      await queue.poll();
      renderTasks();
    } catch {
      /* transient poll failure: keep last rows */
    }
  }, session.pollIntervalMs);
}

function renderTasks() {
  const tbody = el<HTMLTableSectionElement>("task-rows");
  tbody.innerHTML = "";
  for (const row of queue.rows) {
    const tr = document.createElement("tr");
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.disabled = !queue.canRetry(row);
    retry.addEventListener("click", () => queue.retry(row).then(renderTasks));
    tr.innerHTML =
      `<td>${row.kind}</td><td>${String(row.payload["address"] ?? row.payload["key"] ?? "")}</td>` +
      `<td>${row.status}</td><td>${row.attempts}</td><td>${row.last_error ?? ""}</td>`;
    const td = document.createElement("td");
    td.appendChild(retry);
    tr.appendChild(td);
    tbody.appendChild(tr);
  }
  el("queue-error").textContent = queue.inlineError ?? "";
}

el<HTMLFormElement>("enqueue-form").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  await queue.enqueue(el<HTMLInputElement>("enqueue-address").value.trim());
  renderTasks();
});

// ---- search view -----------------------------------------------------------

el<HTMLInputElement>("search-file").addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  const dataUrl = await new Promise<string>((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = reject;
    reader.readAsDataURL(file);
  });
  await search.searchImage(dataUrlToBase64(dataUrl), file.name);
  renderSearch();
});

function renderSearch() {
  el("search-error").textContent = search.inlineError ?? "";
  el("breadcrumbs").textContent = search.history.map((b) => b.label).join(" > ");
  const grid = el("result-grid");
  grid.innerHTML = "";
  for (const r of search.results) {
    const card = document.createElement("div");
    card.className = "result-card";
    const img = document.createElement("img");
    img.src = r.metadata["media_url"] ?? "";
    img.addEventListener("click", () =>
      search.searchFromResult(r).then(renderSearch)
    );
    const label = document.createElement("div");
    label.textContent = `${r.id} (${r.distance.toExponential(3)})`;
    card.append(img, label);
    grid.appendChild(card);
  }
}

// ---- visualization view ----------------------------------------------------

let plotPoints: PlotPoint[] = [];
let lasso: [number, number][] = [];

el<HTMLButtonElement>("viz-run").addEventListener("click", async () => {
  const ids = el<HTMLTextAreaElement>("viz-ids")
    .value.split("\n")
    .map((s) => s.trim())
    .filter(Boolean);
  const seed = Number(el<HTMLInputElement>("viz-seed").value || "0");
  if (ids.length < 4) {
    el("viz-error").textContent = "select at least 4 ids";
    return;
  }
  try {
    const resp = await api.visualize(ids, seed);
    plotPoints = resp.points.map(([x, y], i) => ({
      id: resp.ids[i]!,
      x,
      y,
      collection: collectionOf(resp.ids[i]!),
    }));
    drawScatter();
    el("viz-error").textContent = "";
    el("viz-purity").textContent =
      `nearest-neighbor purity: ${nearestNeighborPurity(plotPoints).toFixed(3)}`;
  } catch (e) {
    el("viz-error").textContent = e instanceof Error ? e.message : String(e);
  }
});

function plotTransform() {
  const canvas = el<HTMLCanvasElement>("viz-canvas");
  const xs = plotPoints.map((p) => p.x);
  const ys = plotPoints.map((p) => p.y);
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const pad = 20;
  const sx = (canvas.width - 2 * pad) / (maxX - minX || 1);
  const sy = (canvas.height - 2 * pad) / (maxY - minY || 1);
  return (p: { x: number; y: number }) => ({
    x: pad + (p.x - minX) * sx,
    y: pad + (p.y - minY) * sy,
  });
}

const palette = ["#d9534f", "#428bca", "#5cb85c", "#f0ad4e"];

function drawScatter() {
  const canvas = el<HTMLCanvasElement>("viz-canvas");
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const t = plotTransform();
  const collections = [...new Set(plotPoints.map((p) => p.collection))];
  for (const p of plotPoints) {
    const { x, y } = t(p);
    ctx.fillStyle = palette[collections.indexOf(p.collection) % palette.length]!;
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  if (lasso.length > 1) {
    ctx.strokeStyle = "#888";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(lasso[0]![0], lasso[0]![1]);
    for (const [x, y] of lasso.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

const canvas = el<HTMLCanvasElement>("viz-canvas");
let lassoActive = false;
canvas.addEventListener("mousedown", (ev) => {
  lassoActive = true;
  lasso = [[ev.offsetX, ev.offsetY]];
});
canvas.addEventListener("mousemove", (ev) => {
  if (!lassoActive) return;
  lasso.push([ev.offsetX, ev.offsetY]);
  drawScatter();
});
canvas.addEventListener("mouseup", () => {
  lassoActive = false;
  const t = plotTransform();
  const screenPoints = plotPoints.map((p) => ({ ...p, ...t(p) }));
  const selected = lassoSelect(screenPoints, lasso);
  if (selected.length > 0) {
    el<HTMLTextAreaElement>("viz-ids").value = selected
      .map((p) => p.id)
      .join("\n");
  }
  lasso = [];
  drawScatter();
});
