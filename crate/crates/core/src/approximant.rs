use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::freq::{header_value, header_usize, parse_header, FrequencySet};
use crate::matrix::CMatrix;
use crate::periodize::Periodization;

/// A sparse Fourier approximant shared by `G` functionals:
/// `u_g(y) ≈ Σ_{k ∈ I} c_{g,k} e^{2πi k·φ⁻¹(y)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Approximant {
    frequencies: FrequencySet,
    coefficients: CMatrix,
    periodization: Periodization,
}

impl Approximant {
    pub fn new(
        frequencies: FrequencySet,
        coefficients: CMatrix,
        periodization: Periodization,
    ) -> Result<Self> {
        if coefficients.cols() != frequencies.len() {
            return invalid(format!(
                "{} coefficient columns for {} frequencies",
                coefficients.cols(),
                frequencies.len()
            ));
        }
        Ok(Approximant {
            frequencies,
            coefficients,
            periodization,
        })
    }

    pub fn empty(dim: usize, outputs: usize, periodization: Periodization) -> Self {
        Approximant {
            frequencies: FrequencySet::new(dim),
            coefficients: CMatrix::zeros(outputs, 0),
            periodization,
        }
    }

    pub fn frequencies(&self) -> &FrequencySet {
        &self.frequencies
    }

    pub fn coefficients(&self) -> &CMatrix {
        &self.coefficients
    }

    pub fn periodization(&self) -> &Periodization {
        &self.periodization
    }

    pub fn dim(&self) -> usize {
        self.frequencies.dim()
    }

    pub fn outputs(&self) -> usize {
        self.coefficients.rows()
    }

    /// Evaluates at torus points (row-major `n × d`); returns `G × n`.
    pub fn evaluate_torus(&self, points: &[f64]) -> Result<CMatrix> {
        let d = self.dim();
        if d == 0 || !points.len().is_multiple_of(d) {
            return invalid("point buffer length is not a multiple of the dimension");
        }
        let n = points.len() / d;
        let g = self.outputs();
        let Some((lo, hi)) = self.frequencies.bounds() else {
            return Ok(CMatrix::zeros(g, n));
        };
        let columns: Vec<Vec<Complex64>> = points
            .par_chunks(d)
            .map(|x| {
                // Per-dimension tables e^{2πi m x_j} for m in [lo_j, hi_j].
                let tables: Vec<Vec<Complex64>> = (0..d)
                    .map(|j| {
                        (lo[j]..=hi[j])
                            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 * x[j]))
                            .collect()
                    })
                    .collect();
                let basis: Vec<Complex64> = self
                    .frequencies
                    .iter()
                    .map(|k| {
                        k.iter()
                            .enumerate()
                            .map(|(j, &kj)| tables[j][(kj - lo[j]) as usize])
                            .product()
                    })
                    .collect();
                (0..g)
                    .map(|row| {
                        self.coefficients
                            .row(row)
                            .iter()
                            .zip(&basis)
                            .map(|(c, b)| c * b)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut out = CMatrix::zeros(g, n);
        for (col, values) in columns.into_iter().enumerate() {
            for (row, v) in values.into_iter().enumerate() {
                out.set(row, col, v);
            }
        }
        Ok(out)
    }

    /// Evaluates at points of the original parameter domain (row-major `n × d`).
    pub fn evaluate(&self, points: &[f64]) -> Result<CMatrix> {
        let mut torus = vec![0.0; points.len()];
        for (t, &y) in torus.iter_mut().zip(points) {
            *t = self.periodization.inverse(y)?;
        }
        self.evaluate_torus(&torus)
    }

    /// The same approximant with frequencies in lexicographic order, as stored
    /// in archives. Reports computed from it match those of a reloaded archive
    /// bit for bit.
    pub fn canonical(&self) -> Approximant {
        let sorted = self.frequencies.sorted();
        let perm: Vec<usize> = sorted
            .iter()
            .map(|k| self.frequencies.index_of(k).expect("same elements"))
            .collect();
        Approximant {
            coefficients: self.coefficients.select_columns(&perm),
            frequencies: sorted,
            periodization: self.periodization,
        }
    }

    /// Archive text: header, lexicographic frequency block, then `G` rows of
    /// `re:im` values. Doubles use shortest round-trip formatting.
    pub fn to_archive(&self) -> String {
        let canon = self.canonical();
        let (sorted, coeffs) = (&canon.frequencies, &canon.coefficients);
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let (alpha, beta, delta) = match self.periodization {
            Periodization::None => (None, None, None),
            Periodization::Tent { alpha, beta } => (Some(alpha), Some(beta), None),
            Periodization::Lognormal { delta } => (None, None, Some(delta)),
        };
        let mut s = format!(
            "d={} G={} nI={} model={} alpha={} beta={} delta={}\n",
            self.dim(),
            self.outputs(),
            self.frequencies.len(),
            self.periodization.model_name(),
            opt(alpha),
            opt(beta),
            opt(delta)
        );
        s.push_str(&sorted.to_text());
        for row in 0..coeffs.rows() {
            for (i, c) in coeffs.row(row).iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}:{}", c.re, c.im);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_archive(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty archive".into(),
        })?;
        let fields = parse_header(header, 1)?;
        let d = header_usize(&fields, "d", 1)?;
        let g = header_usize(&fields, "G", 1)?;
        let n = header_usize(&fields, "nI", 1)?;
        let float = |key: &str| -> Result<Option<f64>> {
            let v = header_value(&fields, key, 1)?;
            if v == "-" {
                return Ok(None);
            }
            v.parse().map(Some).map_err(|e| Error::Parse {
                line: 1,
                msg: format!("{key}: {e}"),
            })
        };
        let bad = |msg: String| Error::Parse { line: 1, msg };
        let periodization = match (header_value(&fields, "model", 1)?, float("alpha")?, float("beta")?, float("delta")?) {
            ("periodic", None, None, None) => Periodization::None,
            ("affine", Some(a), Some(b), None) => {
                Periodization::tent(a, b).map_err(|e| bad(e.to_string()))?
            }
            ("lognormal", None, None, Some(delta)) => {
                Periodization::lognormal(delta).map_err(|e| bad(e.to_string()))?
            }
            (model, ..) => return Err(bad(format!("inconsistent periodization fields for model {model}"))),
        };
        let mut rest = lines.map(|(_, l)| l);
        let freqs = FrequencySet::parse_lines(&mut rest, 2)?;
        if freqs.dim() != d || freqs.len() != n {
            return Err(bad(format!(
                "frequency block has d={} n={}, header says d={d} nI={n}",
                freqs.dim(),
                freqs.len()
            )));
        }
        let first_row_line = 3 + n;
        let mut coeffs = CMatrix::zeros(g, n);
        for row in 0..g {
            let line_no = first_row_line + row;
            let line = rest.next().ok_or(Error::Parse {
                line: line_no,
                msg: format!("missing coefficient row {row}"),
            })?;
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let values: Vec<&str> = if n == 0 { Vec::new() } else { line.split(',').collect() };
            if values.len() != n {
                return Err(perr(format!("expected {n} values, found {}", values.len())));
            }
            for (col, v) in values.iter().enumerate() {
                let (re, im) = v
                    .split_once(':')
                    .ok_or_else(|| perr(format!("value {v:?} is not re:im")))?;
                let re: f64 = re.parse().map_err(|e| perr(format!("{v:?}: {e}")))?;
                let im: f64 = im.parse().map_err(|e| perr(format!("{v:?}: {e}")))?;
                coeffs.set(row, col, Complex64::new(re, im));
            }
        }
        if let Some(extra) = rest.find(|l| !l.trim().is_empty()) {
            return Err(Error::Parse {
                line: first_row_line + g,
                msg: format!("trailing content {extra:?}"),
            });
        }
        Approximant::new(freqs, coeffs, periodization)
    }

    pub fn write_archive(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_archive())?;
        Ok(())
    }

    pub fn read_archive(path: &Path) -> Result<Self> {
        Approximant::from_archive(&std::fs::read_to_string(path)?)
    }

    /// Restricts to a subset of the frequencies (in the subset's order).
    pub fn restricted(&self, subset: &FrequencySet) -> Result<Approximant> {
        let perm = self.subset_columns(subset)?;
        Approximant::new(
            subset.clone(),
            self.coefficients.select_columns(&perm),
            self.periodization,
        )
    }

    pub(crate) fn subset_columns(&self, subset: &FrequencySet) -> Result<Vec<usize>> {
        subset
            .iter()
            .map(|k| {
                self.frequencies.index_of(k).ok_or_else(|| {
                    Error::InvalidArgument(format!("frequency {k:?} is not in the approximant"))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(dim: usize, k: Vec<i32>, c: Complex64, p: Periodization) -> Approximant {
        let set = FrequencySet::from_frequencies(dim, [k]).unwrap();
        Approximant::new(set, CMatrix::from_vec(1, 1, vec![c]), p).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let app = one(2, vec![0, 0], Complex64::new(2.0, 0.0), Periodization::None);
        assert_eq!(app.evaluate(&[0.3, -0.1]).unwrap().get(0, 0), Complex64::new(2.0, 0.0));

        let app = one(2, vec![1, 0], Complex64::new(1.0, 0.0), Periodization::None);
        let v = app.evaluate(&[0.25, 0.9]).unwrap().get(0, 0);
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-15);

        let tent = Periodization::tent(-1.0, 1.0).unwrap();
        let app = one(1, vec![2], Complex64::new(1.0, 0.0), tent);
        assert!((app.evaluate(&[1.0]).unwrap().get(0, 0) - 1.0).norm() < 1e-15);
        assert!(app.evaluate(&[1.5]).is_err());
    }

    #[test]
    fn archive_round_trip_is_exact() {
        let set = FrequencySet::from_frequencies(2, [vec![3, -1], vec![0, 0], vec![-2, 5]]).unwrap();
        let c = CMatrix::from_rows(vec![
            vec![
                Complex64::new(0.1, -1e-300),
                Complex64::new(1.0 / 3.0, 2.5e17),
                Complex64::new(-0.0, f64::MIN_POSITIVE),
            ],
            vec![
                Complex64::new(std::f64::consts::PI, 0.0),
                Complex64::new(-7.0, 1e-12),
                Complex64::new(123456.789, -0.5),
            ],
        ]);
        for p in [
            Periodization::None,
            Periodization::tent(-1.0, 1.0).unwrap(),
            Periodization::lognormal(1.0 / 16396.0).unwrap(),
        ] {
            let app = Approximant::new(set.clone(), c.clone(), p).unwrap();
            let text = app.to_archive();
            let back = Approximant::from_archive(&text).unwrap();
            assert_eq!(back.to_archive(), text);
            assert_eq!(back.restricted(&set).unwrap(), app);
        }
        let text = Approximant::new(set, c, Periodization::None)
            .unwrap()
            .to_archive();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "d=2 G=2 nI=3 model=periodic alpha=- beta=- delta=-");
        assert_eq!(lines[1], "d=2 n=3");
        assert_eq!(lines[2], "-2,5");
    }

    #[test]
    fn corrupt_archives_report_lines() {
        let good = "d=1 G=1 nI=2 model=periodic alpha=- beta=- delta=-\nd=1 n=2\n0\n1\n1:0,2:0\n";
        assert!(Approximant::from_archive(good).is_ok());
        let bad_value = good.replace("2:0", "2;0");
        assert!(matches!(Approximant::from_archive(&bad_value), Err(Error::Parse { line: 5, .. })));
        let bad_freq = good.replace("\n1\n", "\nx\n");
        assert!(matches!(Approximant::from_archive(&bad_freq), Err(Error::Parse { line: 4, .. })));
        let missing_row = "d=1 G=2 nI=2 model=periodic alpha=- beta=- delta=-\nd=1 n=2\n0\n1\n1:0,2:0\n";
        assert!(matches!(Approximant::from_archive(missing_row), Err(Error::Parse { line: 6, .. })));
        let bad_model = good.replace("alpha=-", "alpha=1");
        assert!(matches!(Approximant::from_archive(&bad_model), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_approximant_evaluates_to_zero() {
        let app = Approximant::empty(3, 2, Periodization::None);
        let v = app.evaluate(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((v.rows(), v.cols()), (2, 1));
        assert_eq!(v.get(1, 0), Complex64::new(0.0, 0.0));
        let back = Approximant::from_archive(&app.to_archive()).unwrap();
        assert_eq!(back, app);
    }
}
