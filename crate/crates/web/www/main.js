import init, { landscape, spectrum, quasimode } from './pkg/witten_web.js';

const $ = (id) => document.getElementById(id);
const COLORS = ['#1f5fa8', '#c8402a', '#2f8f3a', '#8a4fb0', '#d08a10', '#2a9d9d', '#777', '#b03070'];

function eps() {
  return Math.pow(10, parseFloat($('eps').value));
}

function potential() {
  const name = $('potential').value;
  const spec = { name };
  if (name === 'custom') {
    spec.coeffs = $('coeffs').value.split(',').map((s) => parseFloat(s.trim()));
  }
  const h = parseFloat($('half-width').value);
  if (h > 0) spec.half_width = h;
  return JSON.stringify(spec);
}

function call(f, ...args) {
  const out = JSON.parse(f(potential(), ...args));
  if (out.error) {
    $('report').textContent = 'error: ' + out.error;
    return null;
  }
  return out;
}

// curves: [{x, y, label, dots}]
function plot(curves) {
  const c = $('plot');
  const g = c.getContext('2d');
  const pad = 40;
  g.clearRect(0, 0, c.width, c.height);
  const xs = curves.flatMap((k) => k.x);
  const ys = curves.flatMap((k) => k.y).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y1 - y0 < 1e-12) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (c.width - 2 * pad);
  const sy = (y) => c.height - pad - ((y - y0) / (y1 - y0)) * (c.height - 2 * pad);

  g.strokeStyle = '#ddd';
  g.beginPath();
  if (y0 < 0 && y1 > 0) { g.moveTo(pad, sy(0)); g.lineTo(c.width - pad, sy(0)); }
  g.stroke();
  g.fillStyle = '#555';
  g.font = '12px system-ui';
  g.fillText(x0.toFixed(2), pad, c.height - 15);
  g.fillText(x1.toFixed(2), c.width - pad - 30, c.height - 15);
  g.fillText(y1.toPrecision(3), 4, pad);
  g.fillText(y0.toPrecision(3), 4, c.height - pad);

  $('legend').innerHTML = '';
  curves.forEach((k, i) => {
    const col = COLORS[i % COLORS.length];
    g.strokeStyle = col;
    g.lineWidth = 2;
    g.beginPath();
    k.x.forEach((x, j) => (j ? g.lineTo(sx(x), sy(k.y[j])) : g.moveTo(sx(x), sy(k.y[j]))));
    g.stroke();
    (k.dots || []).forEach(([x, y]) => {
      g.fillStyle = col;
      g.beginPath();
      g.arc(sx(x), sy(y), 4, 0, 2 * Math.PI);
      g.fill();
    });
    const item = document.createElement('span');
    item.innerHTML = `<i style="background:${col}"></i>${k.label}`;
    $('legend').append(item);
  });
}

const fmt = (v) => (v === undefined ? 'n/a' : Number(v).toExponential(5));

function showLandscape() {
  const r = call(landscape);
  if (!r) return;
  const dots = r.critical_points.map((p) => [p.location[0], p.value]);
  plot([{ x: r.x, y: r.v, label: 'potential, critical points marked', dots }]);
  const lines = r.critical_points.map(
    (p) => `  ${p.index === 0 ? 'minimum' : 'saddle '} x = ${p.location[0].toFixed(6)}  f = ${p.value.toFixed(6)}  f'' = ${p.hessian_eigenvalues[0].toFixed(6)}`
  );
  const pred = r.E === undefined ? r.note : `barrier E = ${r.E.toFixed(6)}, prefactor A = ${r.A.toFixed(6)}`;
  $('report').textContent = `critical points:\n${lines.join('\n')}\n${pred}`;
}

function showSpectrum() {
  const k = parseInt($('k').value, 10) || 4;
  const r = call(spectrum, eps(), k);
  if (!r) return;
  plot(r.modes.map((m, i) => ({ x: r.x, y: m, label: `mode ${i + 1}` })));
  const ev = r.eigenvalues.map((l, i) => `  lambda${i + 1} = ${fmt(l)}   residual ${fmt(r.residuals[i])}`);
  $('report').textContent =
    `eps = ${eps().toFixed(4)}, ${r.x.length} sites\n${ev.join('\n')}\n` +
    `eigenvalues below the harmonic threshold ${fmt(r.threshold)}: ${r.n_small ?? 'n/a'}\n` +
    `predicted gap ${fmt(r.predicted)}, lambda2 / prediction = ${r.ratio === undefined ? 'n/a' : r.ratio.toFixed(6)}`;
}

function showQuasimode() {
  const r = call(quasimode, eps());
  if (!r) return;
  plot([
    { x: r.x, y: r.psi, label: 'quasimode' },
    { x: r.x, y: r.eigenvector, label: 'second eigenvector' },
  ]);
  $('report').textContent =
    `eps = ${eps().toFixed(4)}, rho = ${r.rho.toFixed(3)}\n` +
    `lower bound      ${fmt(r.lower_bound)}\n` +
    `lambda2          ${fmt(r.lambda2)}\n` +
    `Rayleigh quotient ${fmt(r.rayleigh_quotient)}\n` +
    `prediction       ${fmt(r.predicted)}\n` +
    `cosine between the two vectors ${r.overlap.toFixed(9)}\n` +
    `measured / predicted: norm ${r.norm_ratio.toFixed(4)}, energy ${r.dirichlet_ratio.toFixed(4)}`;
}

let last = showLandscape;
const run = (f) => () => { last = f; f(); };

await init();
$('eps-out').textContent = eps().toFixed(4);
$('eps').addEventListener('input', () => { $('eps-out').textContent = eps().toFixed(4); });
$('eps').addEventListener('change', () => last());
$('potential').addEventListener('change', () => {
  $('coeffs-label').hidden = $('potential').value !== 'custom';
  last();
});
$('run-landscape').addEventListener('click', run(showLandscape));
$('run-spectrum').addEventListener('click', run(showSpectrum));
$('run-quasimode').addEventListener('click', run(showQuasimode));
showLandscape();
