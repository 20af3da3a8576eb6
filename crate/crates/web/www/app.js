import init, { Demo } from "./pkg/keydeform_web.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");

let demo = null;
let yaw = 0.6, pitch = -0.35;
let drag = null;

function rotate(p) {
  const [x, y, z] = p;
  const cy = Math.cos(yaw), sy = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const x1 = cy * x + sy * z, z1 = -sy * x + cy * z;
  return [x1, cp * y - sp * z1, sp * y + cp * z1];
}

// inverse of rotate for a screen-plane displacement
function unrotate(d) {
  const [x, y, z] = d;
  const cy = Math.cos(yaw), sy = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const y1 = cp * y + sp * z, z1 = -sp * y + cp * z;
  return [cy * x - sy * z1, y1, sy * x + cy * z1];
}

function scale() {
  return 0.8 * Math.min(canvas.width, canvas.height);
}

function project(p) {
  const r = rotate(p);
  const s = scale();
  return [canvas.width / 2 + s * r[0], canvas.height / 2 - s * r[1], r[2]];
}

function triples(a) {
  const out = [];
  for (let i = 0; i < a.length; i += 3) out.push([a[i], a[i + 1], a[i + 2]]);
  return out;
}

function status(msg) {
  $("status").textContent = msg || "";
}

function heatColor(t) {
  const h = (1 - Math.min(1, Math.max(0, t))) * 240;
  return `hsl(${h}, 80%, 50%)`;
}

function drawMesh(verts, faces) {
  const light = [0.3, 0.5, 0.8];
  const tris = [];
  for (let f = 0; f < faces.length; f += 3) {
    const a = rotate(verts[faces[f]]), b = rotate(verts[faces[f + 1]]), c = rotate(verts[faces[f + 2]]);
    const u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    const v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    const n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    const len = Math.hypot(...n) || 1;
    const shade = Math.abs(n[0] * light[0] + n[1] * light[1] + n[2] * light[2]) / len;
    tris.push({ f, depth: a[2] + b[2] + c[2], shade });
  }
  tris.sort((p, q) => p.depth - q.depth);
  for (const t of tris) {
    const pts = [0, 1, 2].map((i) => project(verts[faces[t.f + i]]));
    const g = Math.round(90 + 140 * t.shade);
    ctx.fillStyle = `rgb(${g}, ${g}, ${Math.min(255, g + 20)})`;
    ctx.beginPath();
    ctx.moveTo(pts[0][0], pts[0][1]);
    ctx.lineTo(pts[1][0], pts[1][1]);
    ctx.lineTo(pts[2][0], pts[2][1]);
    ctx.closePath();
    ctx.fill();
  }
}

function drawCage(cage) {
  ctx.fillStyle = "rgba(0, 120, 0, 0.6)";
  for (const p of cage) {
    const [x, y] = project(p);
    ctx.fillRect(x - 2, y - 2, 4, 4);
  }
}

function drawKeypoints(kps) {
  kps.forEach((p, i) => {
    const [x, y] = project(p);
    ctx.fillStyle = drag && drag.index === i ? "#f80" : "#d00";
    ctx.beginPath();
    ctx.arc(x, y, 6, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function drawFps() {
  const j = Number($("j").value);
  const cloud = triples(demo.cloud());
  const heat = demo.fpsHeat(j);
  const max = Math.max(...heat) || 1;
  const order = cloud.map((p, i) => [project(p), i]).sort((a, b) => a[0][2] - b[0][2]);
  for (const [[x, y], i] of order) {
    ctx.fillStyle = heatColor(heat[i] / max);
    ctx.fillRect(x - 2, y - 2, 4, 4);
  }
  ctx.fillStyle = "#000";
  for (const i of demo.fpsIndices(j)) {
    const [x, y] = project(cloud[i]);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function draw() {
  if (!demo) return;
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  try {
    if ($("mode").value === "fps") {
      drawFps();
      return;
    }
    drawMesh(triples(demo.vertices()), demo.faces());
    if ($("showCage").checked) drawCage(triples(demo.cage()));
    drawKeypoints(triples(demo.keypoints()));
  } catch (e) {
    status(String(e));
  }
}

function buildSliders() {
  const box = $("sliders");
  box.innerHTML = "";
  for (let b = 0; b < demo.numBases(); b++) {
    const label = document.createElement("label");
    label.textContent = `basis ${b}`;
    const input = document.createElement("input");
    Object.assign(input, { type: "range", min: -3, max: 3, step: 0.05, value: 0 });
    input.addEventListener("input", applyPrior);
    label.appendChild(input);
    box.appendChild(label);
  }
}

function applyPrior() {
  const sigmas = [...$("sliders").querySelectorAll("input")].map((i) => Number(i.value));
  try {
    demo.setPrior(new Float64Array(sigmas));
    status();
  } catch (e) {
    status(String(e));
  }
  draw();
}

function load() {
  try {
    demo = new Demo($("family").value, Number($("seed").value) >>> 0);
    status();
  } catch (e) {
    status(String(e));
    return;
  }
  buildSliders();
  draw();
}

canvas.addEventListener("pointerdown", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const mx = ev.clientX - rect.left, my = ev.clientY - rect.top;
  let hit = -1;
  if ($("mode").value === "edit") {
    triples(demo.keypoints()).forEach((p, i) => {
      const [x, y] = project(p);
      if (Math.hypot(x - mx, y - my) < 9) hit = i;
    });
  }
  drag = { index: hit, x: mx, y: my };
  canvas.setPointerCapture(ev.pointerId);
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drag) return;
  const rect = canvas.getBoundingClientRect();
  const mx = ev.clientX - rect.left, my = ev.clientY - rect.top;
  const dx = mx - drag.x, dy = my - drag.y;
  drag.x = mx;
  drag.y = my;
  if (drag.index < 0) {
    yaw += dx * 0.01;
    pitch = Math.max(-1.5, Math.min(1.5, pitch + dy * 0.01));
  } else {
    const s = scale();
    const d = unrotate([dx / s, -dy / s, 0]);
    const p = triples(demo.keypoints())[drag.index];
    try {
      demo.moveKeypoint(drag.index, p[0] + d[0], p[1] + d[1], p[2] + d[2], $("sync").checked);
      status();
    } catch (e) {
      status(String(e));
    }
  }
  draw();
});

canvas.addEventListener("pointerup", () => {
  drag = null;
  draw();
});

$("family").addEventListener("change", load);
$("seed").addEventListener("change", load);
$("mode").addEventListener("change", () => {
  $("fpsBox").hidden = $("mode").value !== "fps";
  draw();
});
$("showCage").addEventListener("change", draw);
$("j").addEventListener("input", () => {
  $("jOut").textContent = $("j").value;
  draw();
});
$("reset").addEventListener("click", () => {
  demo.reset();
  for (const i of $("sliders").querySelectorAll("input")) i.value = 0;
  draw();
});
window.addEventListener("resize", draw);

init().then(load);
