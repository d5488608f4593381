import { StudioApi } from "./api.js";
import { parseState, serializeState, type StudioState } from "./state.js";
import { renderSession } from "./view.js";
import { SessionViewModel } from "./viewmodel.js";

const BASE_URL = "";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const api = new StudioApi(BASE_URL);

  let state: StudioState = parseState(window.location.hash);
  if (!state.checkpointId) {
    const checkpoints = await api.listCheckpoints();
    if (checkpoints.length === 0) {
      root.textContent = "No checkpoints available on the backend.";
      return;
    }
    state = { ...state, checkpointId: checkpoints[0].id };
  }

  const vm = new SessionViewModel(api, state);
  await vm.open();

  const rerender = () =>
    renderSession(root, vm, {
      onRun: () => {
        void vm.run().then(() => {
          window.location.hash = serializeState(vm.snapshotState());
          rerender();
        });
        rerender();
      },
      onAdvise: () => {
        void vm.fetchSuggestions().then(rerender);
      },
      onShare: () => {
        window.location.hash = serializeState(vm.snapshotState());
        return window.location.href;
      },
    });
  rerender();

  // a shared link replays immediately: the state carries the whole request
  if (state.negative || window.location.hash.length > 1) {
    void vm.run().then(rerender);
  }
}

void boot().catch((err) => {
  const root = document.getElementById("app");
  if (root) root.textContent = String(err);
});
