/** Geometry helpers for the visualization view: lasso selection and the
 * nearest-neighbor collection-purity readout shown next to the plot. */

export interface PlotPoint {
  id: string;
  x: number;
  y: number;
  collection: string;
}

/** Ray-casting point-in-polygon for lasso selection. */
export function pointInPolygon(
  x: number,
  y: number,
  polygon: [number, number][]
): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i]!;
    const [xj, yj] = polygon[j]!;
    const crosses =
      yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

export function lassoSelect(
  points: PlotPoint[],
  polygon: [number, number][]
): PlotPoint[] {
  if (polygon.length < 3) return [];
  return points.filter((p) => pointInPolygon(p.x, p.y, polygon));
}

/** Fraction of points whose nearest neighbor shares their collection. */
export function nearestNeighborPurity(points: PlotPoint[]): number {
  if (points.length < 2) return 1;
  let pure = 0;
  for (const p of points) {
    let best: PlotPoint | null = null;
    let bestD = Infinity;
    for (const q of points) {
      if (q === p) continue;
      const d = (p.x - q.x) ** 2 + (p.y - q.y) ** 2;
      if (d < bestD) {
        bestD = d;
        best = q;
      }
    }
    if (best && best.collection === p.collection) pure++;
  }
  return pure / points.length;
}

/** Collection label from a vector id "{chain}:{contract}:{token_id}". */
export function collectionOf(id: string): string {
  const parts = id.split(":");
  return parts.length >= 2 ? parts[1]! : id;
}
