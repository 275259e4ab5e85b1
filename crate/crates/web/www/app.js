import init, { Demo, ema, spectrum } from "./pkg/propfault_web.js";

const CHANNELS = ["acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"];
const $ = (id) => document.getElementById(id);

function fillSelect(el, labels) {
  labels.forEach((text, i) => el.add(new Option(text, i)));
}

function setupCanvas(canvas) {
  const dpr = window.devicePixelRatio || 1;
  canvas.width = canvas.clientWidth * dpr;
  canvas.height = canvas.clientHeight * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  return { ctx, w: canvas.clientWidth, h: canvas.clientHeight };
}

// Draws series [{x, y, color, width}] on shared axes.
function plot(canvas, series, { xLabel, yLabel, hline, marker } = {}) {
  const { ctx, w, h } = setupCanvas(canvas);
  const pad = { l: 50, r: 10, t: 10, b: 30 };
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (hline !== undefined) { y0 = Math.min(y0, hline); y1 = Math.max(y1, hline); }
  const sx = (x) => pad.l + ((x - x0) / (x1 - x0 || 1)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - y0) / (y1 - y0 || 1)) * (h - pad.t - pad.b);

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(y1.toPrecision(3), 2, pad.t + 10);
  ctx.fillText(y0.toPrecision(3), 2, h - pad.b);
  ctx.fillText(x0.toFixed(0), pad.l, h - 12);
  ctx.fillText(x1.toFixed(0), w - pad.r - 20, h - 12);
  if (xLabel) ctx.fillText(xLabel, w / 2 - 20, h - 4);
  if (yLabel) ctx.fillText(yLabel, pad.l + 4, pad.t + 12);

  if (hline !== undefined) {
    ctx.strokeStyle = "#555";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad.l, sy(hline));
    ctx.lineTo(w - pad.r, sy(hline));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width || 1;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(s.y[i])) : ctx.moveTo(sx(x), sy(s.y[i]))));
    ctx.stroke();
  }
  if (marker !== undefined) {
    ctx.strokeStyle = "#2ca02c";
    ctx.beginPath();
    ctx.moveTo(sx(marker), pad.t);
    ctx.lineTo(sx(marker), h - pad.b);
    ctx.stroke();
  }
  return (px) => x0 + ((px - pad.l) / (w - pad.l - pad.r)) * (x1 - x0);
}

function drawSpectrum() {
  const sev = Number($("sp-sev").value);
  $("sp-sev-v").textContent = `${(sev * 100).toFixed(0)}%`;
  const s = JSON.parse(spectrum(sev, Number($("sp-motor").value) + 1, Number($("sp-chan").value), 7));
  const db = (p) => p.map((v) => 10 * Math.log10(v + 1e-12));
  plot($("sp-canvas"), [
    { x: s.frequencies, y: db(s.healthy), color: "#1f77b4" },
    { x: s.frequencies, y: db(s.fault), color: "#d62728" },
  ], { xLabel: "frequency [Hz]", yLabel: "PSD [dB]" });
}

let demo;
let scan;
let selected;
let toX;

function drawTrace() {
  const alpha = Number($("tr-alpha").value);
  $("tr-alpha-v").textContent = alpha.toFixed(2);
  const smooth = Array.from(ema(Float64Array.from(scan.q), alpha));
  toX = plot($("tr-canvas"), [
    { x: scan.times_s, y: scan.q, color: "#aaa" },
    { x: scan.times_s, y: smooth, color: "#d62728", width: 2 },
  ], { xLabel: "time [s]", yLabel: "q", hline: 0, marker: selected === undefined ? undefined : scan.times_s[selected] });

  const positive = smooth.filter((v) => v > 0).length / smooth.length;
  const counts = new Array(7).fill(0);
  smooth.forEach((v, i) => { if (v > 0) counts[scan.motor[i]] += 1; });
  const modal = counts.indexOf(Math.max(...counts));
  $("tr-out").textContent = `windows with q̃ > 0: ${(100 * positive).toFixed(1)}%  ->  ` +
    (positive > 0.5 ? `fault declared, localized to motor ${modal}` : "no fault declared");
  if (selected !== undefined) drawCls(smooth[selected]);
}

function rescan() {
  const sev = Number($("tr-sev").value);
  $("tr-sev-v").textContent = `${(sev * 100).toFixed(0)}%`;
  scan = JSON.parse(demo.scan(sev, Number($("tr-motor").value) + 1, 11));
  drawTrace();
}

function drawCls(qObs) {
  const alpha = Number($("cls-alpha").value);
  $("cls-alpha-v").textContent = alpha.toFixed(2);
  const r = JSON.parse(demo.cls(qObs, alpha));
  $("cls-out").textContent =
    `t = ${scan.times_s[selected].toFixed(1)} s, q̃ = ${r.q_obs.toFixed(2)}:  ` +
    `p_b = ${r.p_b.toExponential(2)}, p_sb = ${r.p_sb.toFixed(3)}, CLs = ${r.cls_det.toExponential(2)}  ->  ` +
    (r.detected ? "detected" : "not detected");
}

async function main() {
  await init();
  const motors = [1, 2, 3, 4, 5, 6].map((m) => `motor ${m}`);
  fillSelect($("sp-motor"), motors);
  fillSelect($("tr-motor"), motors);
  fillSelect($("sp-chan"), CHANNELS);
  $("sp-chan").value = "5";
  for (const id of ["sp-sev", "sp-motor", "sp-chan"]) $(id).addEventListener("input", drawSpectrum);
  drawSpectrum();

  $("status").textContent = "Fitting the detector on a synthetic hexarotor corpus...";
  await new Promise((r) => setTimeout(r, 20));
  demo = new Demo(1);
  $("status").textContent = "Ready.";
  for (const id of ["tr-sev", "tr-motor"]) $(id).addEventListener("input", rescan);
  $("tr-alpha").addEventListener("input", drawTrace);
  $("cls-alpha").addEventListener("input", drawTrace);
  $("tr-canvas").addEventListener("click", (ev) => {
    const t = toX(ev.offsetX);
    selected = scan.times_s.reduce((best, x, i) => (Math.abs(x - t) < Math.abs(scan.times_s[best] - t) ? i : best), 0);
    drawTrace();
  });
  rescan();
}

main().catch((e) => { $("status").textContent = `Error: ${e}`; });
