import init, { preprocess, mock_cosine, synthetic_ap } from "./pkg/enrichbench_demo.js";

const $ = (id) => document.getElementById(id);

function show(out, fn) {
  try {
    out.classList.remove("error");
    fn();
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
  }
}

function updatePreprocess() {
  show($("pp-out"), () => {
    const r = JSON.parse(preprocess($("pp-text").value, $("pp-noise").checked, $("pp-lower").checked));
    const steps = r.applied_steps.length ? r.applied_steps.join(", ") : "none";
    $("pp-out").textContent = `${r.cleaned}\n\nsteps: ${steps}, tokens: ${r.tokens}`;
  });
}

function updateCosine() {
  show($("cos-out"), () => {
    const dim = Number($("cos-dim").value);
    const seed = BigInt($("cos-seed").value || 0);
    const c = mock_cosine($("cos-a").value, $("cos-b").value, dim, seed);
    $("cos-out").textContent = `cosine = ${c.toFixed(6)}`;
  });
}

function runPairs() {
  const table = $("ap-top");
  table.hidden = true;
  show($("ap-out"), () => {
    const r = JSON.parse(synthetic_ap(
      Number($("ap-pos").value),
      Number($("ap-neg").value),
      BigInt($("ap-seed").value || 0),
      Number($("ap-dim").value),
      42n,
    ));
    $("ap-out").textContent = `${r.dataset}: ${r.pairs} pairs, cosine AP = ${r.ap_percent.toFixed(2)}`;
    const body = table.querySelector("tbody");
    body.replaceChildren(...r.top.map((p) => {
      const tr = document.createElement("tr");
      for (const v of [p.score.toFixed(4), p.gold, p.text_a, p.text_b]) {
        const td = document.createElement("td");
        td.textContent = v;
        tr.append(td);
      }
      return tr;
    }));
    table.hidden = false;
  });
}

await init();
for (const id of ["pp-text", "pp-noise", "pp-lower"]) $(id).addEventListener("input", updatePreprocess);
for (const id of ["cos-a", "cos-b", "cos-dim", "cos-seed"]) $(id).addEventListener("input", updateCosine);
$("ap-run").addEventListener("click", runPairs);
updatePreprocess();
updateCosine();
