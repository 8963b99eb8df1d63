/** Assemble the explorer: search panel, atlas scatter, coherence matrix,
 * detail pane, and the shared store. The API base URL comes from the
 * `data-api-base` attribute on the mount node (default: same origin).
 */

import { ApiClient, ApiError } from "./api.js";
import { ErrorBanner } from "./banner.js";
import { DetailPane } from "./detail.js";
import { JsdPanel } from "./jsd.js";
import { AtlasView } from "./scatter.js";
import { SearchPanel } from "./search.js";
import { Store } from "./state.js";

export interface App {
  store: Store;
  search: SearchPanel;
  atlas: AtlasView;
  jsd: JsdPanel;
  detail: DetailPane;
  banner: ErrorBanner;
  ready: Promise<void>;
}

export function createApp(mount: HTMLElement, apiBase?: string): App {
  const base = apiBase ?? mount.dataset.apiBase ?? "";
  const api = new ApiClient(base);
  const store = new Store();

  const banner = new ErrorBanner(store);
  const detail = new DetailPane(api);
  const atlas = new AtlasView(store, 640, 480, async (id) => (await api.structure(id)).title);
  const jsd = new JsdPanel();
  const search = new SearchPanel(api, store, (id) => {
    const hit = store.get().results.find((r) => r.id === id);
    store.update({ selectedId: id });
    void detail.show(id, hit?.score);
  });

  mount.replaceChildren(banner.root, search.root, atlas.root, jsd.root, detail.root);

  const ready = (async () => {
    try {
      const map = await api.map();
      atlas.setAtlasMissing(false);
      atlas.setPoints(map.points, map.clusters);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        atlas.setAtlasMissing(true);
      } else {
        store.update({ error: `map failed: ${String(error)}` });
      }
    }
    try {
      jsd.render(await api.clusters());
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        jsd.renderPlaceholder("atlas not built");
      } else {
        jsd.renderPlaceholder(`clusters unavailable: ${String(error)}`);
      }
    }
  })();

  return { store, search, atlas, jsd, detail, banner, ready };
}

const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  createApp(mount);
}
