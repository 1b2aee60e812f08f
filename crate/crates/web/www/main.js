import init, { transfer_curve, ground_profile, quench_frames } from "./pkg/bosechain_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(30, 10);
  ctx.lineTo(30, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

function line(ctx, xs, ys, xmax, ymax, w, h, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => {
    const px = 30 + (x / xmax) * (w - 40);
    const py = h - 20 - (ys[i] / ymax) * (h - 30);
    i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
  });
  ctx.stroke();
}

function bars(canvas, values, ymax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  axes(ctx, w, h);
  const bw = (w - 40) / values.length;
  ctx.fillStyle = "#3b6ea5";
  values.forEach((v, i) => {
    const bh = (v / ymax) * (h - 30);
    ctx.fillRect(32 + i * bw, h - 20 - bh, bw - 4, bh);
  });
}

function plotTransfer() {
  const n = num("tr-n");
  const lambda = num("tr-lambda");
  const tMax = (2 * Math.PI) / lambda;
  const data = transfer_curve(n, lambda, tMax, 400);
  const t = [], pth = [], ch = [];
  for (let i = 0; i < data.length; i += 3) {
    t.push(data[i]);
    pth.push(data[i + 1]);
    ch.push(data[i + 2]);
  }
  const canvas = $("tr-canvas");
  const ctx = canvas.getContext("2d");
  axes(ctx, canvas.width, canvas.height);
  line(ctx, t, pth, tMax, 1, canvas.width, canvas.height, "#3b6ea5");
  line(ctx, t, ch, tMax, 1, canvas.width, canvas.height, "#d9822b");
}

function runGround() {
  const n = num("gs-n");
  $("gs-status").textContent = "computing...";
  setTimeout(() => {
    try {
      const out = ground_profile(n, $("gs-profile").value, 2, num("gs-u"));
      const dens = Array.from(out.slice(0, n));
      bars($("gs-canvas"), dens, Math.max(2, ...dens));
      $("gs-status").textContent =
        `logneg ${out[n].toFixed(4)}, eps ${out[n + 1].toFixed(4)}`;
    } catch (e) {
      $("gs-status").textContent = String(e);
    }
  });
}

function runQuench() {
  const n = num("q-n");
  $("q-status").textContent = "evolving...";
  setTimeout(() => {
    let frames;
    try {
      frames = quench_frames(n, $("q-profile").value, 2, num("q-u"), num("q-t"), 60);
    } catch (e) {
      $("q-status").textContent = String(e);
      return;
    }
    const count = frames.length / n;
    let i = 0;
    const step = () => {
      bars($("q-canvas"), Array.from(frames.slice(i * n, (i + 1) * n)), 3);
      $("q-status").textContent = `frame ${i + 1} / ${count}`;
      if (++i < count) requestAnimationFrame(step);
    };
    step();
  });
}

await init();
$("tr-run").onclick = plotTransfer;
$("gs-run").onclick = runGround;
$("q-run").onclick = runQuench;
plotTransfer();
