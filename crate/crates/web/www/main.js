import init, { categoryCurves, simulateAndFit, fisherInterval } from "./pkg/ordlatent_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

// maps data coordinates onto a canvas with a margin for axis labels
function frame(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  const m = { l: 45, r: 10, t: 10, b: 30 };
  const w = canvas.width - m.l - m.r;
  const h = canvas.height - m.t - m.b;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const x = (v) => m.l + ((v - xr[0]) / (xr[1] - xr[0])) * w;
  const y = (v) => m.t + h - ((v - yr[0]) / (yr[1] - yr[0])) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(m.l, m.t, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  for (let k = 0; k <= 4; k++) {
    const xv = xr[0] + ((xr[1] - xr[0]) * k) / 4;
    const yv = yr[0] + ((yr[1] - yr[0]) * k) / 4;
    ctx.fillText(xv.toFixed(1), x(xv) - 10, m.t + h + 16);
    ctx.fillText(yv.toFixed(2), 5, y(yv) + 4);
  }
  return { ctx, x, y };
}

function polyline(ctx, pts, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach(([px, py], i) => (i ? ctx.lineTo(px, py) : ctx.moveTo(px, py)));
  ctx.stroke();
}

function drawCurves() {
  const loading = Number($("loading").value);
  $("loading-value").textContent = loading.toFixed(2);
  const cuts = $("cuts").value.split(",").map((s) => Number(s.trim()));
  let rows;
  try {
    rows = categoryCurves(new Float64Array(cuts), loading, -4, 4, 161);
  } catch (e) {
    $("curves-msg").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    return;
  }
  const q = cuts.length + 1;
  const { ctx, x, y } = frame($("curves"), [-4, 4], [0, 1]);
  for (let s = 0; s < q; s++) {
    const pts = [];
    for (let r = 0; r < rows.length; r += q + 1) pts.push([x(rows[r]), y(rows[r + 1 + s])]);
    polyline(ctx, pts, COLORS[s % COLORS.length]);
  }
  $("curves-msg").textContent =
    `P(category s | F) for s = 1..${q} against F; colours in category order: ` +
    COLORS.slice(0, q).join(" ");
}

function runFit() {
  const msg = $("fit-msg");
  msg.textContent = "fitting...";
  // let the message paint before the synchronous fit
  setTimeout(() => {
    const t0 = performance.now();
    let s;
    try {
      s = simulateAndFit($("scenario").value, Number($("rho").value), Number($("n").value),
        Number($("seed").value), 0.95);
    } catch (e) {
      msg.innerHTML = `<span class="err">${e.message ?? e}</span>`;
      return;
    }
    const ms = (performance.now() - t0).toFixed(0);
    msg.textContent =
      `rho_hat = ${s.rho_hat.toFixed(4)}   95% Fisher [${s.lower.toFixed(4)}, ${s.upper.toFixed(4)}]   ` +
      `loglik ${s.log_likelihood.toFixed(3)}   ${s.converged ? "converged" : "NOT converged"} ` +
      `in ${s.iterations} iterations, ${ms} ms`;
    const f = s.scores();
    s.free();
    const lim = Math.max(2.5, ...Array.from(f, Math.abs));
    const { ctx, x, y } = frame($("scores"), [-lim, lim], [-lim, lim]);
    ctx.fillStyle = COLORS[2];
    for (let i = 0; i < f.length; i += 2) {
      ctx.beginPath();
      ctx.arc(x(f[i]), y(f[i + 1]), 3, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.fillStyle = "#444";
    ctx.fillText("latent scores: F_x across, F_y up", 50, 24);
  }, 10);
}

function drawFisher() {
  const rho = Number($("fz-rho").value);
  $("fz-rho-value").textContent = rho.toFixed(2);
  const level = Number($("fz-level").value);
  const mean = $("fz-mean").checked;
  const lower = [];
  const upper = [];
  let at30;
  try {
    for (let n = 4; n <= 200; n++) {
      const [lo, hi] = fisherInterval(rho, n, level, mean);
      lower.push([n, lo]);
      upper.push([n, hi]);
      if (n === 30) at30 = [lo, hi];
    }
  } catch (e) {
    $("fisher-msg").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    return;
  }
  const { ctx, x, y } = frame($("fisher"), [4, 200], [-1, 1]);
  polyline(ctx, lower.map(([n, v]) => [x(n), y(v)]), COLORS[0]);
  polyline(ctx, upper.map(([n, v]) => [x(n), y(v)]), COLORS[1]);
  polyline(ctx, [[x(4), y(rho)], [x(200), y(rho)]], "#bbb");
  $("fisher-msg").textContent =
    `interval endpoints against sample size n; at n = 30: [${at30[0].toFixed(4)}, ${at30[1].toFixed(4)}]`;
}

await init();
$("loading").addEventListener("input", drawCurves);
$("cuts").addEventListener("change", drawCurves);
$("fit").addEventListener("click", runFit);
$("next").addEventListener("click", () => {
  $("seed").value = Number($("seed").value) + 1;
  runFit();
});
for (const id of ["fz-rho", "fz-level", "fz-mean"]) $(id).addEventListener("input", drawFisher);
drawCurves();
drawFisher();
runFit();
