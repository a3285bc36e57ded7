import init, { Session } from "./pkg/dms_wasm.js";

const $ = (id) => document.getElementById(id);
const status = (text) => { $("status").textContent = text; };
let session = null;

function paint(id, rgba, size) {
  const canvas = $(id);
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  if (rgba.length === 0) {
    ctx.clearRect(0, 0, size, size);
    return;
  }
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

function showWeights() {
  $("beta-value").textContent = (10 ** +$("beta").value).toPrecision(3);
  $("lambda-value").textContent = (10 ** +$("lambda").value).toPrecision(3);
}

function describe(r, seconds) {
  const lines = [
    `beta = ${r.beta.toPrecision(4)}   lambda = ${r.lambda.toPrecision(4)}`,
    `PSNR ${r.psnr.toFixed(2)} dB (noisy ${session.noisy_psnr().toFixed(2)} dB), ${r.iterations} solver iterations`,
  ];
  if (r.tuning_steps > 0 || !Number.isNaN(r.sigma)) {
    lines.push(`sigma used ${r.sigma.toPrecision(3)}, ${r.tuning_steps} descent steps`);
  }
  lines.push(`${seconds.toFixed(2)} s`);
  return lines.join("\n");
}

// let the status line repaint before a blocking call
function busy(text, work) {
  status(text);
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const report = work();
      paint("result", session.result_rgba(+$("threshold").value), session.size());
      status(describe(report, (performance.now() - t0) / 1000));
      report.free();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  }, 20);
}

function synth() {
  try {
    session?.free();
    session = new Session($("geometry").value, +$("size").value, +$("sigma").value, BigInt($("seed").value));
    const n = session.size();
    paint("clean", session.clean_rgba(), n);
    paint("noisy", session.noisy_rgba(), n);
    paint("result", [], n);
    status(`noisy PSNR ${session.noisy_psnr().toFixed(2)} dB, MAD sigma estimate ${session.mad_sigma().toPrecision(3)}`);
  } catch (e) {
    session = null;
    status(`error: ${e.message ?? e}`);
  }
}

await init();
$("beta").addEventListener("input", showWeights);
$("lambda").addEventListener("input", showWeights);
$("synth").addEventListener("click", synth);
$("denoise").addEventListener("click", () => {
  if (!session) return;
  busy("solving…", () => session.denoise(10 ** +$("beta").value, 10 ** +$("lambda").value));
});
$("tune").addEventListener("click", () => {
  if (!session) return;
  const sigma = $("known-sigma").checked ? +$("sigma").value : 0;
  busy("tuning, this blocks the page for a while…", () =>
    session.auto_tune(sigma, +$("replicates").value, +$("steps").value, $("scan").checked));
});
showWeights();
synth();
