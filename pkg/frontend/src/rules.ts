/** Client-side rule validation (the server validates again). */

export function validateRule(low: number, high: number, hysteresis: number): string | null {
  if (!Number.isFinite(low) || !Number.isFinite(high) || !Number.isFinite(hysteresis)) {
    return "thresholds must be numbers";
  }
  if (low >= high) return "low must be below high";
  if (hysteresis < 0) return "hysteresis must be >= 0";
  return null;
}
