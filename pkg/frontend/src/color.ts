/** Color scales for similarity overlays and cluster ids. */

/** Map a similarity in [-1, 1] to a cold-to-hot CSS color. */
export function similarityColor(value: number): string {
  const t = Math.max(0, Math.min(1, (value + 1) / 2));
  // blue (240deg) down to red (0deg)
  const hue = 240 * (1 - t);
  return `hsl(${hue.toFixed(0)}, 85%, 50%)`;
}

const CLUSTER_HUES = [210, 30, 120, 320, 60, 180, 270, 0];

export function clusterColor(cluster: number): string {
  const hue = CLUSTER_HUES[((cluster % CLUSTER_HUES.length) + CLUSTER_HUES.length) % CLUSTER_HUES.length];
  return `hsl(${hue}, 60%, 55%)`;
}

/** Legend tick values for the similarity scale. */
export const LEGEND_TICKS = [-1, -0.5, 0, 0.5, 1];
