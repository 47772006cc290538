import init, { forward_mean, spectral_scan, eigenfunction } from "./pkg/semirte_wasm_demo.js";

const num = (id) => parseFloat(document.getElementById(id).value);

function colour(t) {
  // dark blue to yellow
  const r = Math.round(255 * Math.min(1, 1.8 * t));
  const g = Math.round(255 * t);
  const b = Math.round(255 * Math.max(0, 0.6 - t));
  return [r, g, b];
}

function drawImage(canvas, img) {
  const nx = img.nx(), ny = img.ny(), v = img.values();
  const lo = img.min(), hi = img.max(), span = hi > lo ? hi - lo : 1;
  const off = document.createElement("canvas");
  off.width = nx;
  off.height = ny;
  const ctx = off.getContext("2d");
  const data = ctx.createImageData(nx, ny);
  for (let iy = 0; iy < ny; iy++) {
    for (let ix = 0; ix < nx; ix++) {
      const x = v[iy * nx + ix];
      const p = 4 * ((ny - 1 - iy) * nx + ix);
      if (Number.isNaN(x)) {
        data.data.set([255, 255, 255, 255], p);
      } else {
        data.data.set([...colour((x - lo) / span), 255], p);
      }
    }
  }
  ctx.putImageData(data, 0, 0);
  const c = canvas.getContext("2d");
  c.imageSmoothingEnabled = false;
  c.clearRect(0, 0, canvas.width, canvas.height);
  c.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function drawScan(canvas, pts) {
  const c = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  c.clearRect(0, 0, w, h);
  const lx = pts.map((p) => Math.log10(p[0])), ly = pts.map((p) => Math.log10(p[1]));
  const x0 = Math.min(...lx) - 0.1, x1 = Math.max(...lx) + 0.1;
  const y0 = Math.min(...ly) - 0.2, y1 = Math.max(...ly) + 0.2;
  const X = (x) => pad + (w - 2 * pad) * (x - x0) / (x1 - x0);
  const Y = (y) => h - pad - (h - 2 * pad) * (y - y0) / (y1 - y0);
  c.strokeStyle = "#888";
  c.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  c.fillStyle = "#000";
  c.fillText("log10 eps", w / 2 - 20, h - 8);
  c.fillText("log10 (1 - rho)", 4, 14);
  c.strokeStyle = "#1f4fbf";
  c.beginPath();
  lx.forEach((x, i) => (i ? c.lineTo(X(x), Y(ly[i])) : c.moveTo(X(x), Y(ly[i]))));
  c.stroke();
  lx.forEach((x, i) => c.fillRect(X(x) - 3, Y(ly[i]) - 3, 6, 6));
}

function guard(out, f) {
  const t = performance.now();
  try {
    const msg = f();
    out.textContent = `${msg}\n${((performance.now() - t) / 1000).toFixed(2)} s`;
  } catch (e) {
    out.textContent = `error: ${e}`;
  }
}

await init();

document.getElementById("f-run").onclick = () =>
  guard(document.getElementById("f-out"), () => {
    const img = forward_mean(num("f-h"), num("f-nv"), num("f-s0"), num("f-s1"), num("f-ss"), num("f-f"));
    drawImage(document.getElementById("f-canvas"), img);
    return `min <u> = ${img.min().toFixed(5)}, max <u> = ${img.max().toFixed(5)}`;
  });

document.getElementById("s-run").onclick = () =>
  guard(document.getElementById("s-out"), () => {
    const eps = document.getElementById("s-eps").value.split(",").map((s) => parseFloat(s));
    const r = spectral_scan(num("s-h"), new Float64Array(eps));
    const pts = [];
    for (let i = 0; i + 1 < r.length; i += 2) pts.push([r[i], r[i + 1]]);
    drawScan(document.getElementById("s-canvas"), pts);
    const rows = pts.map(([e, g]) => `eps ${e}: 1 - rho = ${g.toExponential(4)}`).join("\n");
    return `${rows}\nlog-log slope ${r[r.length - 1].toFixed(3)}`;
  });

document.getElementById("e-run").onclick = () =>
  guard(document.getElementById("e-out"), () => {
    const img = eigenfunction(num("e-h"), num("e-eps"));
    drawImage(document.getElementById("e-canvas"), img);
    return `max Phi = ${img.max().toFixed(5)}`;
  });
