//! Composite Gauss–Legendre on geometrically graded panels.
//!
//! Panels shrink by a factor 2 toward a singular endpoint. The uncovered end piece is
//! extrapolated from the last two panel sums, which for an endpoint behaviour `t^gamma`
//! form a geometric sequence with ratio `2^{-(1+gamma)}`. A ratio at or above one means
//! the endpoint singularity is not integrable.

use super::rules::GaussLegendre;

/// Panel ratios closer to one than this are reported as non-integrable.
pub const DIVERGENCE_MARGIN: f64 = 1e-3;

/// Panel ratio `q` at which an endpoint singularity is judged non-integrable.
pub fn divergence_threshold() -> f64 {
    2f64.powf(-DIVERGENCE_MARGIN)
}

/// Non-integrable endpoint, carrying the measured panel ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diverges(pub f64);

/// Geometric panels on `[a, b]` shrinking toward `b`: `[b - L 2^{-k}, b - L 2^{-k-1}]`.
/// The uncovered remainder is `[b - L 2^{-levels}, b]`.
pub fn panels_toward_end(a: f64, b: f64, levels: usize) -> Vec<(f64, f64)> {
    let len = b - a;
    (0..levels)
        .map(|k| {
            let lo = b - len * 0.5f64.powi(k as i32);
            let hi = b - len * 0.5f64.powi(k as i32 + 1);
            (lo, hi)
        })
        .collect()
}

/// Mirror image of [`panels_toward_end`]; remainder is `[a, a + L 2^{-levels}]`.
pub fn panels_toward_start(a: f64, b: f64, levels: usize) -> Vec<(f64, f64)> {
    let len = b - a;
    (0..levels)
        .map(|k| {
            let hi = a + len * 0.5f64.powi(k as i32);
            let lo = a + len * 0.5f64.powi(k as i32 + 1);
            (lo, hi)
        })
        .collect()
}

/// Estimate of the end piece not covered by the graded panels.
///
/// `sums` and `mass` are the signed and absolute panel integrals ordered toward the singular
/// end. `direct` integrates the end piece with plain Gauss–Legendre; it is used when the
/// panel sums look smooth (ratio near 1/2), cancel, or are negligible.
pub fn end_remainder(sums: &[f64], mass: &[f64], direct: impl FnOnce() -> f64) -> Result<f64, Diverges> {
    end_remainder_scaled(sums, mass, mass.iter().sum(), direct)
}

/// [`end_remainder`] where panel sums below `1e-13 * scale` count as rounding noise.
pub fn end_remainder_scaled(sums: &[f64], mass: &[f64], scale: f64, direct: impl FnOnce() -> f64) -> Result<f64, Diverges> {
    let k = sums.len();
    if k < 2 {
        return Ok(direct());
    }
    let (a, b) = (sums[k - 2], sums[k - 1]);
    let (ma, mb) = (mass[k - 2], mass[k - 1]);
    if mb <= 1e-13 * scale {
        return Ok(direct());
    }
    if ma > 0.0 && mb / ma >= divergence_threshold() {
        return Err(Diverges(mb / ma));
    }
    if b.abs() <= 1e-13 * scale || a == 0.0 {
        return Ok(direct());
    }
    let q = b / a;
    if !(q > 0.0 && q < 1.0) || (q - 0.5).abs() < 0.01 {
        return Ok(direct());
    }
    Ok(b * q / (1.0 - q))
}

/// Geometric tail beyond the last of a run of dyadic shells.
pub fn tail_remainder(sums: &[f64], mass: &[f64]) -> Result<f64, Diverges> {
    let k = sums.len();
    if k < 2 {
        return Ok(0.0);
    }
    let total_mass: f64 = mass.iter().sum();
    let (a, b) = (sums[k - 2], sums[k - 1]);
    if b.abs() <= 1e-15 * total_mass || a == 0.0 {
        return Ok(0.0);
    }
    let q = b / a;
    if !(q > 0.0) {
        return Ok(0.0);
    }
    if q >= divergence_threshold() {
        return Err(Diverges(q));
    }
    Ok(b * q / (1.0 - q))
}

/// Composite rule on one line.
#[derive(Debug, Clone)]
pub struct LineRule {
    gl: GaussLegendre,
    levels: usize,
}

impl LineRule {
    pub fn new(order: usize, levels: usize) -> Self {
        Self { gl: GaussLegendre::new(order), levels: levels.max(2) }
    }

    pub fn gl(&self) -> &GaussLegendre {
        &self.gl
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn panel(&self, lo: f64, hi: f64, h: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut mass = 0.0;
        for (t, w) in self.gl.mapped(lo, hi) {
            let v = w * h(t);
            sum += v;
            mass += v.abs();
        }
        (sum, mass)
    }

    /// `int_a^b h`, graded toward `b`.
    pub fn toward_end(&self, a: f64, b: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, Diverges> {
        if b <= a {
            return Ok(0.0);
        }
        let panels = panels_toward_end(a, b, self.levels);
        let (sums, mass): (Vec<f64>, Vec<f64>) = panels.iter().map(|&(lo, hi)| self.panel(lo, hi, &mut h)).unzip();
        let start = panels.last().map_or(a, |p| p.1);
        let rem = end_remainder(&sums, &mass, || self.gl.integrate(start, b, &mut h))?;
        Ok(sums.iter().sum::<f64>() + rem)
    }

    /// `int_a^b h`, graded toward `a`.
    pub fn toward_start(&self, a: f64, b: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, Diverges> {
        if b <= a {
            return Ok(0.0);
        }
        let panels = panels_toward_start(a, b, self.levels);
        let (sums, mass): (Vec<f64>, Vec<f64>) = panels.iter().map(|&(lo, hi)| self.panel(lo, hi, &mut h)).unzip();
        let stop = panels.last().map_or(b, |p| p.0);
        let rem = end_remainder(&sums, &mass, || self.gl.integrate(a, stop, &mut h))?;
        Ok(sums.iter().sum::<f64>() + rem)
    }

    /// `int_a^b h`, graded toward both ends.
    pub fn both_ends(&self, a: f64, b: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, Diverges> {
        let mid = 0.5 * (a + b);
        Ok(self.toward_start(a, mid, &mut h)? + self.toward_end(mid, b, &mut h)?)
    }

    /// `int_a^b h` for `a > 0` where `h` varies on the scale of the distance to the origin near
    /// `a` and may be singular at `b`: dyadic panels `[a, 2a], [2a, 4a], ...` up to the midpoint,
    /// then graded toward `b`.
    pub fn dyadic_then_end(&self, a: f64, b: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, Diverges> {
        if b <= a {
            return Ok(0.0);
        }
        let mut lo = a;
        let mut sum = 0.0;
        while 2.0 * lo < 0.5 * (lo + b) && lo > 0.0 {
            sum += self.panel(lo, 2.0 * lo, &mut h).0;
            lo *= 2.0;
        }
        Ok(sum + self.toward_end(lo, b, h)?)
    }

    /// Nodes and weights of [`LineRule::toward_start`] with the end piece integrated directly,
    /// so that the rule is linear in the integrand.
    pub fn linear_toward_start(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        if b <= a {
            return Vec::new();
        }
        let panels = panels_toward_start(a, b, self.levels);
        let stop = panels.last().map_or(b, |p| p.0);
        let mut nodes: Vec<(f64, f64)> = panels.iter().flat_map(|&(lo, hi)| self.gl.mapped(lo, hi)).collect();
        nodes.extend(self.gl.mapped(a, stop));
        nodes
    }

    /// Linear counterpart of [`LineRule::dyadic_then_end`].
    pub fn linear_dyadic_then_end(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        if b <= a {
            return Vec::new();
        }
        let mut nodes = Vec::new();
        let mut lo = a;
        while 2.0 * lo < 0.5 * (lo + b) && lo > 0.0 {
            nodes.extend(self.gl.mapped(lo, 2.0 * lo));
            lo *= 2.0;
        }
        let panels = panels_toward_end(lo, b, self.levels);
        let start = panels.last().map_or(lo, |p| p.1);
        nodes.extend(panels.iter().flat_map(|&(l, h)| self.gl.mapped(l, h)));
        nodes.extend(self.gl.mapped(start, b));
        nodes
    }

    /// `int_a^inf h` for `a > 0`: dyadic shells `[a 2^k, a 2^{k+1}]` until the shell edge passes
    /// `limit` (at least two shells), then the geometric tail fitted on the last two shells.
    pub fn to_infinity(&self, a: f64, limit: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, Diverges> {
        let mut sums = Vec::new();
        let mut mass = Vec::new();
        let mut lo = a;
        while sums.len() < 2 || lo < limit {
            let (s, m) = self.panel(lo, 2.0 * lo, &mut h);
            sums.push(s);
            mass.push(m);
            lo *= 2.0;
        }
        let tail = tail_remainder(&sums, &mass)?;
        Ok(sums.iter().sum::<f64>() + tail)
    }
}

/// Several integrands sharing their nodes, e.g. a potential and its gradient components.
#[derive(Debug, Clone)]
pub struct MultiLine<'a> {
    rule: &'a LineRule,
    width: usize,
}

impl<'a> MultiLine<'a> {
    pub fn new(rule: &'a LineRule, width: usize) -> Self {
        Self { rule, width }
    }

    fn panel(&self, lo: f64, hi: f64, h: &mut impl FnMut(f64, &mut [f64]), sum: &mut [f64], mass: &mut [f64]) {
        let mut buf = vec![0.0; self.width];
        sum.iter_mut().for_each(|v| *v = 0.0);
        mass.iter_mut().for_each(|v| *v = 0.0);
        for (t, w) in self.rule.gl.mapped(lo, hi) {
            h(t, &mut buf);
            for k in 0..self.width {
                let v = w * buf[k];
                sum[k] += v;
                mass[k] += v.abs();
            }
        }
    }

    fn graded(
        &self,
        panels: &[(f64, f64)],
        rest: (f64, f64),
        h: &mut impl FnMut(f64, &mut [f64]),
        out: &mut [f64],
    ) -> Result<(), Diverges> {
        let m = self.width;
        let k = panels.len();
        let mut sums = vec![0.0; k * m];
        let mut mass = vec![0.0; k * m];
        for (i, &(lo, hi)) in panels.iter().enumerate() {
            let (s, ms) = (&mut sums[i * m..(i + 1) * m], &mut mass[i * m..(i + 1) * m]);
            self.panel(lo, hi, h, s, ms);
        }
        let scale = (0..m).map(|c| (0..k).map(|i| mass[i * m + c]).sum::<f64>()).fold(0.0, f64::max);
        let mut direct: Option<Vec<f64>> = None;
        let mut col_s = vec![0.0; k];
        let mut col_m = vec![0.0; k];
        for c in 0..m {
            for i in 0..k {
                col_s[i] = sums[i * m + c];
                col_m[i] = mass[i * m + c];
            }
            let rem = end_remainder_scaled(&col_s, &col_m, scale, || {
                let d = direct.get_or_insert_with(|| {
                    let mut tot = vec![0.0; m];
                    let mut dummy = vec![0.0; m];
                    self.panel(rest.0, rest.1, h, &mut tot, &mut dummy);
                    tot
                });
                d[c]
            })?;
            out[c] += col_s.iter().sum::<f64>() + rem;
        }
        Ok(())
    }

    /// Adds `int_a^b h` to `out`, graded toward `a`.
    pub fn toward_start(&self, a: f64, b: f64, mut h: impl FnMut(f64, &mut [f64]), out: &mut [f64]) -> Result<(), Diverges> {
        if b <= a {
            return Ok(());
        }
        let panels = panels_toward_start(a, b, self.rule.levels);
        let stop = panels.last().map_or(b, |p| p.0);
        self.graded(&panels, (a, stop), &mut h, out)
    }

    /// Adds `int_a^b h` to `out`, graded toward `b`.
    pub fn toward_end(&self, a: f64, b: f64, mut h: impl FnMut(f64, &mut [f64]), out: &mut [f64]) -> Result<(), Diverges> {
        if b <= a {
            return Ok(());
        }
        let panels = panels_toward_end(a, b, self.rule.levels);
        let start = panels.last().map_or(a, |p| p.1);
        self.graded(&panels, (start, b), &mut h, out)
    }

    /// Multi-component [`LineRule::dyadic_then_end`].
    pub fn dyadic_then_end(&self, a: f64, b: f64, mut h: impl FnMut(f64, &mut [f64]), out: &mut [f64]) -> Result<(), Diverges> {
        if b <= a {
            return Ok(());
        }
        let mut lo = a;
        let mut s = vec![0.0; self.width];
        let mut ms = vec![0.0; self.width];
        while 2.0 * lo < 0.5 * (lo + b) && lo > 0.0 {
            self.panel(lo, 2.0 * lo, &mut h, &mut s, &mut ms);
            out.iter_mut().zip(&s).for_each(|(o, v)| *o += v);
            lo *= 2.0;
        }
        self.toward_end(lo, b, h, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularities() {
        let rule = LineRule::new(12, 14);
        // int_0^1 t^{-1/2} = 2
        let v = rule.toward_start(0.0, 1.0, |t| t.powf(-0.5)).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        // int_0^1 (1-t)^{-0.9} = 10
        let v = rule.toward_end(0.0, 1.0, |t| (1.0 - t).powf(-0.9)).unwrap();
        assert!((v - 10.0).abs() < 1e-8, "{v}");
        // smooth integrand, both ends
        let v = rule.both_ends(0.0, 2.0, |t| t.exp()).unwrap();
        assert!((v - (2f64.exp() - 1.0)).abs() < 1e-13);
        // non-integrable endpoint
        assert!(rule.toward_end(0.0, 1.0, |t| 1.0 / (1.0 - t)).is_err());
    }

    #[test]
    fn tails() {
        let rule = LineRule::new(12, 14);
        // int_1^inf t^{-2.5} = 1/1.5
        let v = rule.to_infinity(1.0, 64.0, |t| t.powf(-2.5)).unwrap();
        assert!((v - 1.0 / 1.5).abs() < 1e-13);
        assert!(rule.to_infinity(1.0, 64.0, |t| 1.0 / t).is_err());
        let v = rule.dyadic_then_end(0.01, 1.0, |t| t.powf(-2.0)).unwrap();
        assert!((v - 99.0).abs() < 1e-9);
    }

    #[test]
    fn multi_matches_scalar() {
        let rule = LineRule::new(12, 14);
        let multi = MultiLine::new(&rule, 2);
        let mut out = [0.0; 2];
        multi
            .toward_start(0.0, 1.0, |t, o| {
                o[0] = t.powf(-0.5);
                o[1] = t.exp();
            }, &mut out)
            .unwrap();
        assert!((out[0] - 2.0).abs() < 1e-10);
        assert!((out[1] - (1f64.exp() - 1.0)).abs() < 1e-13);
        let mut out = [0.0; 2];
        multi
            .dyadic_then_end(0.01, 1.0, |t, o| {
                o[0] = t.powf(-2.0);
                o[1] = (1.0 - t).powf(-0.5);
            }, &mut out)
            .unwrap();
        assert!((out[0] - 99.0).abs() < 1e-9);
        assert!((out[1] - 2.0 * 0.99f64.sqrt()).abs() < 1e-9);
        let mut out = [0.0; 1];
        assert!(multi_one(&rule).toward_end(0.0, 1.0, |t, o| o[0] = 1.0 / (1.0 - t), &mut out).is_err());
    }

    #[test]
    fn linear_rules() {
        let rule = LineRule::new(12, 14);
        let v: f64 = rule.linear_toward_start(0.0, 1.0).iter().map(|&(t, w)| w * t.powf(-0.5)).sum();
        assert!((v - 2.0).abs() < 1e-3, "{v}");
        let v: f64 = rule.linear_toward_start(0.0, 1.0).iter().map(|&(t, w)| w * t.exp()).sum();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let v: f64 = rule.linear_dyadic_then_end(0.01, 1.0).iter().map(|&(t, w)| w * (1.0 - t).powf(-0.5)).sum();
        assert!((v - 2.0 * 0.99f64.sqrt()).abs() < 1e-3, "{v}");
    }

    fn multi_one(rule: &LineRule) -> MultiLine<'_> {
        MultiLine::new(rule, 1)
    }
}
