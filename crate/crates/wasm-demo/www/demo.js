// Built with: wasm-pack build crates/wasm-demo --target web --out-dir www/pkg
import init, { trace_ray, Demo } from "./pkg/stadium_wasm_demo.js";

const W = 2, H = 1; // billiard bounding box
const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const status = (s) => ($("status").textContent = s);

function toPx(canvas, x, y) {
  return [(x / W) * canvas.width, canvas.height - (y / H) * canvas.height];
}

function drawBoundary(ctx, canvas) {
  ctx.strokeStyle = "#000";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let [px, py] = toPx(canvas, 0, 0);
  ctx.moveTo(px, py);
  for (const [x, y] of [[0, 1], [1, 1]]) ctx.lineTo(...toPx(canvas, x, y));
  for (let i = 0; i <= 48; i++) {
    const a = Math.PI / 2 - (i / 48) * (Math.PI / 2);
    ctx.lineTo(...toPx(canvas, 1 + Math.cos(a), Math.sin(a)));
  }
  ctx.closePath();
  ctx.stroke();
}

function packet() {
  return [num("x"), num("y"), num("angle"), num("k"), num("alpha")];
}

function drawRay() {
  const c = $("billiard"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  drawBoundary(ctx, c);
  const a = (num("angle") * Math.PI) / 180;
  let v;
  try {
    v = trace_ray(num("x"), num("y"), Math.cos(a), Math.sin(a), num("tmax"));
  } catch (e) {
    status(e.message ?? String(e));
    return;
  }
  ctx.strokeStyle = "#c33";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let i = 0; i < v.length; i += 3) {
    const [px, py] = toPx(c, v[i + 1], v[i + 2]);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  }
  ctx.stroke();
  status(`${v.length / 3 - 1} bounces`);
}

function drawSurvival(demo) {
  const c = $("survival"), ctx = c.getContext("2d");
  const tEnd = num("tend"), n = 600;
  let s;
  try {
    s = demo.survival(...packet(), tEnd, n);
  } catch (e) {
    status(e.message ?? String(e));
    return;
  }
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#236";
  ctx.beginPath();
  for (let i = 0; i < n; i++) {
    const px = (i / (n - 1)) * c.width, py = c.height * (1 - s[i + 1]);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  }
  ctx.stroke();
  status(`captured norm ${s[0].toFixed(4)}; S(t) over [0, ${tEnd}]`);
}

function drawDensity(demo) {
  const c = $("density"), ctx = c.getContext("2d");
  const t = num("t");
  $("tval").textContent = t.toFixed(3);
  let rho;
  try {
    rho = demo.density(...packet(), t);
  } catch (e) {
    status(e.message ?? String(e));
    return;
  }
  const nx = demo.nx(), ny = demo.ny();
  const max = rho.reduce((m, v) => Math.max(m, v), 0) || 1;
  const img = ctx.createImageData(nx, ny);
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      const v = Math.sqrt(rho[j * nx + i] / max); // sqrt lifts the tails
      const o = ((ny - 1 - j) * nx + i) * 4;
      img.data[o] = 255 * v;
      img.data[o + 1] = 200 * v * v;
      img.data[o + 2] = 60 * (1 - v);
      img.data[o + 3] = 255;
    }
  }
  const tmp = new OffscreenCanvas(nx, ny);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.drawImage(tmp, 0, 0, c.width, c.height);
  drawBoundary(ctx, c);
}

async function main() {
  await init();
  status("Solving a small eigenbasis…");
  await new Promise((r) => setTimeout(r, 20));
  const demo = new Demo(30, 1200);
  status(`${demo.modes()} modes ready`);

  $("billiard").addEventListener("click", (ev) => {
    const c = ev.currentTarget, r = c.getBoundingClientRect();
    $("x").value = (((ev.clientX - r.left) / r.width) * W).toFixed(3);
    $("y").value = ((1 - (ev.clientY - r.top) / r.height) * H).toFixed(3);
    drawRay();
  });
  $("ray").onclick = drawRay;
  $("surv").onclick = () => drawSurvival(demo);
  $("t").oninput = () => drawDensity(demo);

  drawRay();
  drawSurvival(demo);
  drawDensity(demo);
}

main().catch((e) => status(`failed: ${e}`));
