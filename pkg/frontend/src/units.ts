/** Unit conversions between the service's normalized coordinates and the
 * original units the experimenter entered.  Conversion is display-side
 * only: values sent back to the service are the stored normalized floats,
 * never re-derived from rounded text. */

export function denormalize(xn: number[], bounds: [number, number][]): number[] {
  return xn.map((v, i) => bounds[i][0] + v * (bounds[i][1] - bounds[i][0]));
}

/** Compact display formatting (rounding happens here and only here). */
export function formatValue(v: number, digits = 6): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e6 || a < 1e-4) return v.toExponential(Math.max(1, digits - 1));
  const s = v.toPrecision(digits);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

export function formatVector(xs: number[], digits = 6): string {
  return xs.map((v) => formatValue(v, digits)).join(", ");
}
