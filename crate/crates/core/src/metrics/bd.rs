use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    /// kbit/s.
    pub bitrate: f64,
    /// PSNR in dB.
    pub quality: f64,
}

/// Rate–distortion points of one codec configuration, ordered by bitrate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    label: String,
    points: Vec<RdPoint>,
}

pub const MIN_POINTS: usize = 4;
pub const CSV_HEADER: &str = "bitrate_kbps,psnr_db";

impl RdCurve {
    /// Points are sorted by bitrate. Bitrates must be positive and
    /// distinct; a quality that falls as bitrate rises is only logged.
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "curve '{label}' has {} points; at least {MIN_POINTS} are needed",
                points.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.bitrate > 0.0 && p.bitrate.is_finite() && p.quality.is_finite()))
        {
            return Err(Error::InvalidArgument(format!("curve '{label}': invalid point {p:?}")));
        }
        points.sort_by(|a, b| a.bitrate.total_cmp(&b.bitrate));
        if points.windows(2).any(|w| w[0].bitrate == w[1].bitrate) {
            return Err(Error::InvalidArgument(format!("curve '{label}': repeated bitrate")));
        }
        if points.windows(2).any(|w| w[1].quality < w[0].quality) {
            log::warn!("curve '{label}': quality decreases with bitrate");
        }
        Ok(RdCurve { label, points })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p.bitrate, p.quality));
        }
        s
    }

    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("RD curve CSV", d);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(bad(format!("expected header '{CSV_HEADER}', got {other:?}"))),
        }
        let points = lines
            .enumerate()
            .map(|(i, line)| {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("line {}: '{s}' is not a number", i + 2)));
                match fields.as_slice() {
                    [r, q] => Ok(RdPoint {
                        bitrate: num(r)?,
                        quality: num(q)?,
                    }),
                    _ => Err(bad(format!("line {}: expected 2 fields", i + 2))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, points)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(path.display().to_string(), &text)
    }
}

/// Least-squares cubic `y ≈ Σ c_k u^k` with `u = (x - centre) / scale`;
/// with four points this interpolates.
#[derive(Clone, Copy, Debug)]
struct Cubic {
    coef: [f64; 4],
    centre: f64,
    scale: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len() as f64;
        let centre = xs.iter().sum::<f64>() / n;
        let scale = xs.iter().map(|x| (x - centre).abs()).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument("degenerate RD curve".into()));
        }
        // Normal equations A^T A c = A^T y on the well-conditioned u axis.
        let mut m = [[0.0f64; 5]; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let u = (x - centre) / scale;
            let pw = [1.0, u, u * u, u * u * u];
            for r in 0..4 {
                for c in 0..4 {
                    m[r][c] += pw[r] * pw[c];
                }
                m[r][4] += pw[r] * y;
            }
        }
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .expect("rows remain");
            if m[piv][col].abs() < 1e-12 {
                return Err(Error::InvalidArgument("RD curve points do not determine a cubic".into()));
            }
            m.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..5 {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        let coef = [0, 1, 2, 3].map(|k| m[k][4] / m[k][k]);
        Ok(Cubic { coef, centre, scale })
    }

    /// Exact integral over `[a, b]` in the original x units.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = |x: f64| {
            let u = (x - self.centre) / self.scale;
            self.coef
                .iter()
                .enumerate()
                .map(|(k, c)| c * u.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
                * self.scale
        };
        anti(b) - anti(a)
    }

    #[cfg(test)]
    fn eval(&self, x: f64) -> f64 {
        let u = (x - self.centre) / self.scale;
        self.coef.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

fn overlap(a: &[f64], b: &[f64], what: &str) -> Result<(f64, f64)> {
    let range = |v: &[f64]| {
        (
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (a0, a1) = range(a);
    let (b0, b1) = range(b);
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("RD curves share no {what} range")));
    }
    Ok((lo, hi))
}

fn columns(c: &RdCurve) -> (Vec<f64>, Vec<f64>) {
    c.points
        .iter()
        .map(|p| (p.bitrate.log10(), p.quality))
        .unzip()
}

/// Average of `fit_test - fit_anchor` over the shared x range.
fn mean_gap(ax: &[f64], ay: &[f64], tx: &[f64], ty: &[f64], what: &str) -> Result<(f64, (f64, f64))> {
    let (lo, hi) = overlap(ax, tx, what)?;
    let fa = Cubic::fit(ax, ay)?;
    let ft = Cubic::fit(tx, ty)?;
    Ok(((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo), (lo, hi)))
}

/// Bjøntegaard delta rate in percent (classic cubic fit of log-rate over
/// PSNR). Negative means the test curve needs less bitrate.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    Ok(bd_report(anchor, test)?.bd_rate)
}

/// Bjøntegaard delta PSNR in dB (cubic fit of PSNR over log-rate).
/// Positive means the test curve has higher quality.
pub fn bd_psnr(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    Ok(bd_report(anchor, test)?.bd_psnr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BdReport {
    pub anchor: String,
    pub test: String,
    pub bd_rate: f64,
    pub bd_psnr: f64,
    /// Shared PSNR range used for the rate delta, dB.
    pub quality_interval: (f64, f64),
    /// Shared log10(kbps) range used for the PSNR delta.
    pub log_rate_interval: (f64, f64),
}

pub fn bd_report(anchor: &RdCurve, test: &RdCurve) -> Result<BdReport> {
    let (ar, aq) = columns(anchor);
    let (tr, tq) = columns(test);
    let (log_gap, quality_interval) = mean_gap(&aq, &ar, &tq, &tr, "quality")?;
    let (bd_psnr, log_rate_interval) = mean_gap(&ar, &aq, &tr, &tq, "bitrate")?;
    Ok(BdReport {
        anchor: anchor.label.clone(),
        test: test.label.clone(),
        bd_rate: (10f64.powf(log_gap) - 1.0) * 100.0,
        bd_psnr,
        quality_interval,
        log_rate_interval,
    })
}

impl fmt::Display for BdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method = \"bjontegaard-classic-cubic\"")?;
        writeln!(f, "anchor = {:?}", self.anchor)?;
        writeln!(f, "test = {:?}", self.test)?;
        writeln!(f, "bd_rate_percent = {:.6}", self.bd_rate)?;
        writeln!(f, "bd_psnr_db = {:.6}", self.bd_psnr)?;
        writeln!(
            f,
            "psnr_interval_db = [{:.6}, {:.6}]",
            self.quality_interval.0, self.quality_interval.1
        )?;
        writeln!(
            f,
            "log10_kbps_interval = [{:.6}, {:.6}]",
            self.log_rate_interval.0, self.log_rate_interval.1
        )
    }
}
