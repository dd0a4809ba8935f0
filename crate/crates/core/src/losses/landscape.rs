use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// `(α, p, (1−α)(−ln p) + α·H(p))`.
    Entropy,
    /// `(τ, f, −ln σ(f/τ))`.
    Temperature,
}

impl CurveKind {
    fn name(self) -> &'static str {
        match self {
            Self::Entropy => "entropy",
            Self::Temperature => "temperature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub kind: CurveKind,
    pub param: f64,
    pub x: f64,
    pub loss: f64,
}

fn binary_entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    -(p * p.ln() + q * q.ln())
}

/// `−ln σ(x) = ln(1 + e^{−x})` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// 121 evenly spaced scores on `[−6, 6]`.
pub fn default_score_grid() -> Vec<f64> {
    (0..=120).map(|i| -6.0 + 0.1 * i as f64).collect()
}

pub fn landscape_scan(alphas: &[f64], taus: &[f64], ps: &[f64]) -> Vec<CurveSample> {
    landscape_scan_with_scores(alphas, taus, ps, &default_score_grid())
}

pub fn landscape_scan_with_scores(
    alphas: &[f64],
    taus: &[f64],
    ps: &[f64],
    scores: &[f64],
) -> Vec<CurveSample> {
    let mut out = Vec::with_capacity(alphas.len() * ps.len() + taus.len() * scores.len());
    for &a in alphas {
        for &p in ps {
            let loss = (1.0 - a) * -p.ln() + a * binary_entropy(p);
            out.push(CurveSample { kind: CurveKind::Entropy, param: a, x: p, loss });
        }
    }
    for &t in taus {
        for &f in scores {
            out.push(CurveSample { kind: CurveKind::Temperature, param: t, x: f, loss: neg_log_sigmoid(f / t) });
        }
    }
    out
}

/// Writes `kind,param,x,loss` rows with 17 significant digits.
pub fn write_landscape_csv<W: Write>(out: W, samples: &[CurveSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::Error::io("landscape csv", e.into());
    w.write_record(["kind", "param", "x", "loss"]).map_err(io)?;
    for s in samples {
        w.write_record([
            s.kind.name().to_string(),
            format!("{:.16e}", s.param),
            format!("{:.16e}", s.x),
            format!("{:.16e}", s.loss),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| crate::Error::io("landscape csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = landscape_scan_with_scores(&[0.0, 1.0], &[2.0], &[0.5], &[0.0]);
        let ln2 = 2f64.ln();
        assert!(s.iter().all(|c| (c.loss - ln2).abs() < 1e-15), "{s:?}");
    }

    #[test]
    fn neg_log_sigmoid_is_stable() {
        assert!((neg_log_sigmoid(800.0)).abs() < 1e-300);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trips_values() {
        let s = landscape_scan(&[0.3], &[0.7], &[0.1, 0.9]);
        let mut buf = Vec::new();
        write_landscape_csv(&mut buf, &s).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        for (rec, want) in r.records().zip(&s) {
            let rec = rec.unwrap();
            let loss: f64 = rec[3].parse().unwrap();
            assert_eq!(loss.to_bits(), want.loss.to_bits());
        }
    }
}
