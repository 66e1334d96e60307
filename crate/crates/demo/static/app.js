import init, {
  landscape_grid,
  run_rule_episode,
  sample_policy_rules,
  default_rule,
} from "./pkg/metabbo_demo.js";

const $ = (id) => document.getElementById(id);
const err = $("err");

const FLA_NAMES = [
  "pairwise spread",
  "dist to iter best",
  "dist to best-so-far",
  "gap to best-so-far",
  "gap to iter best",
  "objective std",
  "remaining budget",
  "stagnation",
  "improved flag",
];
const FLA_DEFAULTS = [0.4, 0.3, 0.3, 0.5, 0.4, 0.6, 1.0, 0.0, 1.0];

let landscape = null;
let animation = null;

function fail(e) {
  err.textContent = String(e);
}

function clearErr() {
  err.textContent = "";
}

// Dark-to-bright colormap for the log-objective heatmap.
function color(t) {
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.6 * t - 0.2)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.5 * t * t + 0.05)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 0.4 + 0.9 * (1 - t) * t + 0.2 * t)));
  return [r, g, b];
}

function toCanvas(x, y, size) {
  // problem box is [-100, 100]^2, y up
  return [((x + 100) / 200) * size, ((100 - y) / 200) * size];
}

function drawLandscape(points) {
  const canvas = $("map");
  const ctx = canvas.getContext("2d");
  const size = canvas.width;
  if (!landscape) return;
  const { resolution, values, min_value, max_value } = landscape;
  const img = ctx.createImageData(size, size);
  const span = max_value - min_value || 1;
  for (let py = 0; py < size; py++) {
    const iy = Math.min(resolution - 1, Math.floor((py / size) * resolution));
    for (let px = 0; px < size; px++) {
      const ix = Math.min(resolution - 1, Math.floor((px / size) * resolution));
      const t = (values[iy * resolution + ix] - min_value) / span;
      const [r, g, b] = color(t);
      const o = (py * size + px) * 4;
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = b;
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);

  // optimum marker
  const [ox, oy] = toCanvas(landscape.optimum[0], landscape.optimum[1], size);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(ox, oy, 6, 0, 2 * Math.PI);
  ctx.stroke();

  if (points) {
    ctx.fillStyle = "#6fd3ff";
    for (const [x, y] of points) {
      const [cx, cy] = toCanvas(x, y, size);
      ctx.beginPath();
      ctx.arc(cx, cy, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function drawCurves(best, guide) {
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const logs = (arr) => arr.map((v) => Math.log10(1 + Math.max(0, v)));
  const a = logs(best);
  const b = logs(guide);
  const all = a.concat(b);
  const max = Math.max(...all, 1e-9);
  const min = Math.min(...all);
  const span = max - min || 1;
  const plot = (arr, style) => {
    ctx.strokeStyle = style;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    arr.forEach((v, i) => {
      const x = (i / (arr.length - 1 || 1)) * (w - 12) + 6;
      const y = h - 8 - ((v - min) / span) * (h - 16);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  };
  plot(b, "#ffc16f");
  plot(a, "#6fd3ff");
}

function sampleLandscape() {
  clearErr();
  try {
    const id = Number($("fn").value);
    const seed = BigInt($("lseed").value || "0");
    landscape = JSON.parse(landscape_grid(id, seed, 140));
    if (animation) cancelAnimationFrame(animation);
    drawLandscape(null);
  } catch (e) {
    fail(e);
  }
}

function runEpisode() {
  clearErr();
  try {
    const id = Number($("fn").value);
    const seed = BigInt($("lseed").value || "0");
    const out = JSON.parse(
      run_rule_episode(
        $("rule").value,
        id,
        seed,
        Number($("pop").value),
        Number($("iters").value),
      ),
    );
    drawCurves(out.best_curve, out.guide_best_curve);
    $("episode-summary").textContent =
      `rule final best ${out.final_best.toExponential(3)} | ` +
      `guide final best ${out.guide_final_best.toExponential(3)}`;

    if (animation) cancelAnimationFrame(animation);
    let frame = 0;
    const tick = () => {
      drawLandscape(out.populations[Math.min(frame, out.populations.length - 1)]);
      if (frame < out.populations.length - 1) {
        frame += 1;
        animation = requestAnimationFrame(() => setTimeout(tick, 45));
      }
    };
    tick();
  } catch (e) {
    fail(e);
  }
}

function buildSliders() {
  const root = $("sliders");
  FLA_NAMES.forEach((name, i) => {
    const label = document.createElement("span");
    label.textContent = name;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "0";
    input.max = "1";
    input.step = "0.05";
    input.value = String(FLA_DEFAULTS[i]);
    input.id = `fla${i}`;
    const value = document.createElement("span");
    value.textContent = input.value;
    input.addEventListener("input", () => (value.textContent = input.value));
    root.append(label, input, value);
  });
}

function sampleRules() {
  clearErr();
  try {
    const fla = new Float64Array(9);
    for (let i = 0; i < 9; i++) fla[i] = Number($(`fla${i}`).value);
    const rules = JSON.parse(
      sample_policy_rules(BigInt($("pseed").value || "0"), Number($("count").value), fla),
    );
    const table = $("rules");
    table.innerHTML =
      "<tr><th>#</th><th>rule</th><th>nodes</th><th>height</th><th>log-prob</th></tr>";
    rules.forEach((r, i) => {
      const row = table.insertRow();
      row.insertCell().textContent = String(i + 1);
      row.insertCell().textContent = r.rule;
      row.insertCell().textContent = String(r.nodes);
      row.insertCell().textContent = String(r.height);
      row.insertCell().textContent = r.log_prob.toFixed(3);
    });
  } catch (e) {
    fail(e);
  }
}

init()
  .then(() => {
    $("rule").value = default_rule();
    buildSliders();
    $("sample").addEventListener("click", sampleLandscape);
    $("run").addEventListener("click", runEpisode);
    $("gen").addEventListener("click", sampleRules);
    sampleLandscape();
  })
  .catch(fail);
