import init, { dln_spectrum, shrinkage_curve, galore_relora } from "./pkg/lowrank_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(id, res) {
  $(id).textContent = JSON.stringify(res, null, 2);
}

function axes(ctx, w, h, ymax) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 10, w - 50, h - 30);
  ctx.fillStyle = "#333";
  ctx.fillText(ymax.toPrecision(3), 2, 16);
  ctx.fillText("0", 28, h - 20);
}

function plotSpectrum(res) {
  const c = $("dln-plot"), ctx = c.getContext("2d");
  const { iters, values } = res;
  const ymax = Math.max(1e-12, ...values.flat());
  axes(ctx, c.width, c.height, ymax);
  const x = (i) => 40 + (c.width - 50) * (iters.length > 1 ? i / (iters.length - 1) : 0);
  const y = (v) => 10 + (c.height - 30) * (1 - v / ymax);
  const n = values[0].length;
  for (let j = 0; j < n; j++) {
    ctx.strokeStyle = `hsl(${(360 * j) / n}, 60%, 45%)`;
    ctx.beginPath();
    values.forEach((row, i) => (i ? ctx.lineTo(x(i), y(row[j])) : ctx.moveTo(x(i), y(row[j]))));
    ctx.stroke();
  }
}

function plotShrink(res) {
  const c = $("shr-plot"), ctx = c.getContext("2d");
  const ymax = Math.max(1e-12, ...res.input);
  axes(ctx, c.width, c.height, ymax);
  const n = res.input.length, slot = (c.width - 50) / n, bar = slot / 4;
  const series = [["input", "#bbb"], ["nuclear", "#c33"], ["squared_nuclear", "#36c"]];
  series.forEach(([key, color], k) => {
    ctx.fillStyle = color;
    res[key].forEach((v, i) => {
      const hgt = (c.height - 30) * (v / ymax);
      ctx.fillRect(40 + i * slot + (k + 0.5) * bar, c.height - 20 - hgt, bar, hgt);
    });
  });
}

function runDln() {
  const res = JSON.parse(dln_spectrum(num("dln-d"), num("dln-r"), num("dln-depth"), num("dln-steps"), BigInt(num("dln-seed"))));
  if (!res.error) plotSpectrum(res);
  show("dln-out", res.error ? res : { checks_passed: res.checks_passed, checks_total: res.checks_total, final: res.values.at(-1) });
}

function runShrink() {
  const res = JSON.parse(shrinkage_curve($("shr-values").value, num("shr-lambda"), num("shr-c")));
  if (!res.error) plotShrink(res);
  show("shr-out", res);
}

function runEq() {
  const res = JSON.parse(galore_relora(num("eq-d"), num("eq-rank"), num("eq-period"), num("eq-steps"), BigInt(num("eq-seed")), $("eq-random").checked));
  show("eq-out", res);
}

await init();
$("dln-run").onclick = runDln;
["shr-values", "shr-lambda", "shr-c"].forEach((id) => ($(id).oninput = runShrink));
$("eq-run").onclick = runEq;
runShrink();
