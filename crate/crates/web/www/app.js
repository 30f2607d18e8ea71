// SPDX-License-Identifier: MIT OR Apache-2.0

import init, { simulateSeries, segmentSeries, scoreDetections } from "./pkg/paramcpd_web.js";

const DELTAS = new Uint32Array([2, 5, 10, 20, 40]);
const $ = (id) => document.getElementById(id);

let series = null;
let detections = [];

function status(msg, isError = false) {
  $("status").textContent = msg;
  $("status").className = isError ? "error" : "";
}

// Slider is log10 of the constant.
const penaltyConstant = () => 10 ** Number($("penalty").value);

function plot(canvas, values, color, marks) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);
  if (!values.length) return;
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (hi === lo) { hi += 1; lo -= 1; }
  const pad = 6;
  const sx = (i) => (i / (values.length - 1)) * w;
  const sy = (v) => pad + (1 - (v - lo) / (hi - lo)) * (h - 2 * pad);

  for (const [idx, c] of marks) {
    ctx.strokeStyle = c;
    ctx.lineWidth = 1.5;
    for (const i of idx) {
      ctx.beginPath();
      ctx.moveTo(sx(i), 0);
      ctx.lineTo(sx(i), h);
      ctx.stroke();
    }
  }
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.beginPath();
  const step = Math.max(1, Math.floor(values.length / (2 * w)));
  for (let i = 0; i < values.length; i += step) {
    i === 0 ? ctx.moveTo(sx(i), sy(values[i])) : ctx.lineTo(sx(i), sy(values[i]));
  }
  ctx.stroke();
}

function redraw() {
  if (!series) return;
  const marks = [[series.truth, "rgba(42,138,42,.8)"], [detections, "rgba(192,57,43,.8)"]];
  plot($("x-plot"), series.x, "#345", marks);
  plot($("param-plot"), series.parameter, "#2a8a2a", [[detections, "rgba(192,57,43,.6)"]]);
}

function fmt(v, digits = 3) {
  return v === null || v === undefined ? "–" : v.toFixed(digits);
}

function rescore() {
  const rows = JSON.parse(
    scoreDetections(new Uint32Array(detections), new Uint32Array(series.truth), series.x.length, DELTAS),
  );
  $("scores").innerHTML = rows
    .map((r) => `<tr><td>${r.delta}</td><td>${fmt(r.precision)}</td><td>${fmt(r.recall)}</td>` +
      `<td><b>${fmt(r.f1)}</b></td><td>${fmt(r.mae_steps, 1)}</td><td>${fmt(r.fp_per_1000, 2)}</td></tr>`)
    .join("");
}

function resegment() {
  $("penalty-out").textContent = penaltyConstant().toFixed(2);
  if (!series) return;
  try {
    const t0 = performance.now();
    const seg = JSON.parse(segmentSeries(
      new Float64Array(series.x), penaltyConstant(), Number($("min-size").value), Number($("smoothing").value),
    ));
    detections = seg.breakpoints;
    status(`${detections.length} detections, ${series.truth.length} true changepoints ` +
      `(penalty ${seg.penalty.toFixed(2)}, γ ${seg.gamma.toPrecision(3)}, ${(performance.now() - t0).toFixed(0)} ms)`);
    rescore();
    redraw();
  } catch (e) {
    status(e.message ?? String(e), true);
  }
}

function resimulate() {
  try {
    series = JSON.parse(simulateSeries(
      $("kind").value, Number($("segments").value), Number($("segment-len").value),
      Number($("eta").value), Number($("seed").value),
    ));
    resegment();
  } catch (e) {
    status(e.message ?? String(e), true);
  }
}

await init();
$("simulate").addEventListener("click", resimulate);
$("penalty").addEventListener("input", resegment);
$("min-size").addEventListener("change", resegment);
$("smoothing").addEventListener("change", resegment);
window.addEventListener("resize", redraw);
resimulate();
