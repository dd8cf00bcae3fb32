import init, { head_view, train_curve, gradcheck } from "./pkg/lextree_demo.js";

const $ = (id) => document.getElementById(id);

function show(el, f) {
  try {
    el.classList.remove("err");
    el.textContent = f();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

function heads() {
  $("biasval").textContent = $("bias").value;
  show($("heads"), () => {
    const r = JSON.parse(head_view($("tree").value, $("strategy").value,
      Number($("bias").value), Number($("hseed").value)));
    return r.render;
  });
}

function plot(rows) {
  const c = $("curve"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 24, w = c.width - 2 * pad, h = c.height - 2 * pad;
  const maxLoss = Math.max(...rows.map((r) => r.train_loss));
  const x = (i) => pad + (rows.length > 1 ? (i / (rows.length - 1)) * w : w / 2);
  const line = (key, scale, color) => {
    g.strokeStyle = color;
    g.beginPath();
    rows.forEach((r, i) => {
      const y = pad + h - (r[key] / scale) * h;
      i ? g.lineTo(x(i), y) : g.moveTo(x(i), y);
    });
    g.stroke();
  };
  line("train_loss", maxLoss, "#c33");
  line("train_node_acc", 1, "#36c");
  line("dev_root_acc", 1, "#3a3");
  g.fillStyle = "#333";
  g.fillText("loss (red, scaled)  train node acc (blue)  dev root acc (green)", pad, 14);
}

function train() {
  show($("trainout"), () => {
    const r = JSON.parse(train_curve($("variant").value, Number($("epochs").value), Number($("tseed").value)));
    plot(r.epochs);
    const last = r.epochs[r.epochs.length - 1];
    return `epoch ${last.epoch}: loss ${last.train_loss.toFixed(4)}  train node ${last.train_node_acc.toFixed(3)}  ` +
      `dev root ${last.dev_root_acc.toFixed(3)}  dev node ${last.dev_node_acc.toFixed(3)}`;
  });
}

function check() {
  show($("checkout"), () => JSON.stringify(
    JSON.parse(gradcheck($("target").value, Number($("trees").value), 1)), null, 2));
}

await init();
for (const id of ["tree", "strategy", "bias", "hseed"]) $(id).addEventListener("input", heads);
$("train").addEventListener("click", train);
$("check").addEventListener("click", check);
heads();
