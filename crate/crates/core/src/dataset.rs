//! The two synthetic dataset families: score vectors with an optional spike,
//! and the structured self-attention matrices with Type I/II/III columns.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attention::{TokenRows, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::{Matrix, Vector};

pub const SCHEMA_VERSION: u32 = 1;

/// Value of the single large coordinate of a D1 score vector.
pub const SPIKE: f64 = 32.0;
pub const SCORE_LO: f64 = 2.0;
pub const SCORE_HI: f64 = 4.0;

/// Tolerance on `b + c = 1`.
pub const BC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    D0,
    D1,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::D0, Label::D1];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::D0 => "d0",
            Label::D1 => "d1",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d0" | "0" => Ok(Label::D0),
            "d1" | "1" => Ok(Label::D1),
            _ => Err(Error::Validation(format!(
                "label must be d0 or d1, got {s:?}"
            ))),
        }
    }
}

/// A positive score vector `s = Ax` with its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    entries: Vec<f64>,
    spike_index: Option<usize>,
    label: Label,
}

impl ScoreVector {
    pub fn new(entries: Vec<f64>, spike_index: Option<usize>, label: Label) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::Validation("score vector must be nonempty".into()));
        }
        let in_band = |x: f64| (SCORE_LO..=SCORE_HI).contains(&x);
        match (label, spike_index) {
            (Label::D0, Some(_)) => {
                return Err(Error::Validation("D0 score vectors carry no spike".into()));
            }
            (Label::D1, None) => {
                return Err(Error::Validation(
                    "D1 score vectors need a spike index".into(),
                ));
            }
            (Label::D1, Some(j)) if j >= n => {
                return Err(Error::Validation(format!(
                    "spike index {j} outside [0, {n})"
                )));
            }
            (Label::D1, Some(j)) if entries[j] != SPIKE => {
                return Err(Error::Validation(format!(
                    "spike entry must equal {SPIKE}, got {}",
                    entries[j]
                )));
            }
            _ => {}
        }
        if let Some(i) = (0..n).find(|&i| Some(i) != spike_index && !in_band(entries[i])) {
            return Err(Error::Validation(format!(
                "entry {i} = {} outside [{SCORE_LO}, {SCORE_HI}]",
                entries[i]
            )));
        }
        Ok(Self {
            entries,
            spike_index,
            label,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn spike_index(&self) -> Option<usize> {
        self.spike_index
    }

    pub fn label(&self) -> Label {
        self.label
    }
}

/// Entries i.i.d. uniform on `[2, 4]`; for D1 one uniformly chosen entry is
/// then overwritten with 32.
pub fn sample_score(n: usize, label: Label, seed: u64) -> Result<ScoreVector> {
    if n < 2 {
        return Err(Error::Validation(format!("n ≥ 2, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut entries: Vec<f64> = (0..n)
        .map(|_| rng.random_range(SCORE_LO..=SCORE_HI))
        .collect();
    let spike_index = match label {
        Label::D0 => None,
        Label::D1 => {
            let j = rng.random_range(0..n);
            entries[j] = SPIKE;
            Some(j)
        }
    };
    ScoreVector::new(entries, spike_index, label)
}

/// A matrix `A` and weight `x` with `Ax = s`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedPair {
    pub a: Matrix,
    pub x: Vector,
}

/// `A = [s | 0 | … | 0]`, `x = e_1`.
pub fn realize_matrix(s: &ScoreVector, d: usize) -> Result<RealizedPair> {
    if d == 0 {
        return Err(Error::Validation("d ≥ 1".into()));
    }
    let a = Matrix::from_fn(s.dim(), d, |i, j| if j == 0 { s.entries[i] } else { 0.0 })?;
    Ok(RealizedPair {
        a,
        x: Vector::basis(d, 0)?,
    })
}

/// `A1 = A2 = A3 ∈ ℝ^{n×d}` with column 0 equal to `a·e_{j3}`, columns
/// `1..d−1` equal to `t` stacked copies of `b·I_{d−2}`, and column `d−1`
/// equal to `c·1_n`.
///
/// Stored by its parameters; `j3` is 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfAttnInstance {
    n: usize,
    d: usize,
    t: usize,
    j3: usize,
    a: f64,
    b: f64,
    c: f64,
    label: Label,
}

impl SelfAttnInstance {
    /// Validating constructor; errors name the violated constraint.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        d: usize,
        t: usize,
        j3: usize,
        a: f64,
        b: f64,
        c: f64,
        label: Label,
    ) -> Result<Self> {
        let v = |msg: String| Err(Error::Validation(msg));
        if d < 3 {
            return v(format!("d ≥ 3, got {d}"));
        }
        if t == 0 {
            return v("t ≥ 1".into());
        }
        if (d - 2).checked_mul(t) != Some(n) {
            return v(format!("n = (d−2)·t: {n} ≠ {}·{t}", d - 2));
        }
        if j3 >= n {
            return v(format!("1 ≤ j3 ≤ n: j3 = {} with n = {n}", j3 + 1));
        }
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return v("a, b, c must be finite".into());
        }
        if (b + c - 1.0).abs() > BC_TOL {
            return v(format!("b + c = 1: b + c = {}", b + c));
        }
        if b < 0.1 {
            return v(format!("b ≥ 0.1: b = {b}"));
        }
        if c < 0.1 {
            return v(format!("c ≥ 0.1: c = {c}"));
        }
        match label {
            Label::D0 if !(a > 0.0 && a < 0.1) => v(format!("a ∈ (0, 0.1) for D0: a = {a}")),
            Label::D1 if a < 0.7 => v(format!("a ≥ 0.7 for D1: a = {a}")),
            _ => Ok(Self {
                n,
                d,
                t,
                j3,
                a,
                b,
                c,
                label,
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// 0-based spike row.
    pub fn j3(&self) -> usize {
        self.j3
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn label(&self) -> Label {
        self.label
    }

    /// Column (0-based) holding row `j`'s Type II entry.
    pub fn type2_column(&self, j: usize) -> usize {
        1 + j % (self.d - 2)
    }

    /// Entry `(j, i)`, 0-based.
    pub fn entry(&self, j: usize, i: usize) -> f64 {
        if i == 0 {
            if j == self.j3 {
                self.a
            } else {
                0.0
            }
        } else if i == self.d - 1 {
            self.c
        } else if i == self.type2_column(j) {
            self.b
        } else {
            0.0
        }
    }

    /// Dense copy; refused above 4096 rows.
    pub fn materialize(&self) -> Result<Matrix> {
        if self.n > DENSE_LIMIT {
            return Err(Error::Size(format!(
                "materialization limited to n ≤ {DENSE_LIMIT}, got {}",
                self.n
            )));
        }
        Matrix::from_fn(self.n, self.d, |j, i| self.entry(j, i))
    }

    /// Same instance with a different `j3` (0-based).
    pub fn with_j3(&self, j3: usize) -> Result<Self> {
        Self::new(
            self.n, self.d, self.t, j3, self.a, self.b, self.c, self.label,
        )
    }
}

impl TokenRows for SelfAttnInstance {
    fn n_rows(&self) -> usize {
        self.n
    }

    fn n_cols(&self) -> usize {
        self.d
    }

    fn row_into(&self, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        if j == self.j3 {
            out[0] = self.a;
        }
        out[self.type2_column(j)] = self.b;
        out[self.d - 1] = self.c;
    }

    fn row_sums(&self) -> Vec<f64> {
        let base = self.b + self.c;
        let mut r = vec![base; self.n];
        r[self.j3] = self.a + self.b + self.c;
        r
    }

    fn weighted_row_sum(&self, w: &[f64]) -> Vec<f64> {
        let k = self.d - 2;
        let mut out = vec![0.0; self.d];
        out[0] = self.a * w[self.j3];
        let mut blocks = vec![0.0; k];
        for (j, &x) in w.iter().enumerate() {
            blocks[j % k] += x;
        }
        for (o, s) in out[1..=k].iter_mut().zip(blocks) {
            *o = self.b * s;
        }
        out[self.d - 1] = self.c * w.iter().sum::<f64>();
        out
    }
}

/// Build and validate an instance. `j3` is 0-based.
#[allow(clippy::too_many_arguments)]
pub fn build_selfattn_instance(
    n: usize,
    d: usize,
    t: usize,
    j3: usize,
    a: f64,
    b: f64,
    c: f64,
    label: Label,
) -> Result<SelfAttnInstance> {
    SelfAttnInstance::new(n, d, t, j3, a, b, c, label)
}

/// Instance with `n = (d−2)·t` and `j3` drawn uniformly from the rows.
pub fn sample_selfattn(
    d: usize,
    t: usize,
    a: f64,
    b: f64,
    c: f64,
    label: Label,
    seed: u64,
) -> Result<SelfAttnInstance> {
    if d < 3 || t == 0 {
        return Err(Error::Validation(format!(
            "d ≥ 3 and t ≥ 1, got d = {d}, t = {t}"
        )));
    }
    let n = (d - 2)
        .checked_mul(t)
        .ok_or_else(|| Error::Validation("n = (d−2)·t overflows".into()))?;
    let j3 = rng_from_seed(seed).random_range(0..n);
    SelfAttnInstance::new(n, d, t, j3, a, b, c, label)
}

/// Either dataset instance.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Score(ScoreVector),
    SelfAttn(SelfAttnInstance),
}

/// Serialized form: `{schema_version, kind, params, seed, label}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub schema_version: u32,
    pub kind: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub label: Label,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreParams {
    n: usize,
    entries: Vec<f64>,
    spike_index: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelfAttnParams {
    n: usize,
    d: usize,
    t: usize,
    j3: usize,
    a: f64,
    b: f64,
    c: f64,
}

impl Instance {
    pub fn label(&self) -> Label {
        match self {
            Instance::Score(s) => s.label(),
            Instance::SelfAttn(s) => s.label(),
        }
    }

    /// Document form. Indices are written 1-based.
    pub fn to_document(&self, seed: Option<u64>) -> InstanceDocument {
        let (kind, params) = match self {
            Instance::Score(s) => (
                "score",
                json!({
                    "n": s.dim(),
                    "entries": s.entries(),
                    "spike_index": s.spike_index().map(|j| j + 1),
                }),
            ),
            Instance::SelfAttn(s) => (
                "selfattn",
                json!({
                    "n": s.n, "d": s.d, "t": s.t, "j3": s.j3 + 1,
                    "a": s.a, "b": s.b, "c": s.c,
                }),
            ),
        };
        InstanceDocument {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            params,
            seed,
            label: self.label(),
        }
    }

    pub fn from_document(doc: &InstanceDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        let bad = |e: serde_json::Error| Error::Config(format!("bad {} params: {e}", doc.kind));
        match doc.kind.as_str() {
            "score" => {
                let p: ScoreParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                if p.entries.len() != p.n {
                    return Err(Error::Validation(format!(
                        "n = {} but {} entries",
                        p.n,
                        p.entries.len()
                    )));
                }
                let spike = match p.spike_index {
                    Some(0) => return Err(Error::Validation("spike_index is 1-based".into())),
                    other => other.map(|j| j - 1),
                };
                Ok(Instance::Score(ScoreVector::new(
                    p.entries, spike, doc.label,
                )?))
            }
            "selfattn" => {
                let p: SelfAttnParams = serde_json::from_value(doc.params.clone()).map_err(bad)?;
                if p.j3 == 0 {
                    return Err(Error::Validation("1 ≤ j3 ≤ n: j3 = 0".into()));
                }
                Ok(Instance::SelfAttn(SelfAttnInstance::new(
                    p.n,
                    p.d,
                    p.t,
                    p.j3 - 1,
                    p.a,
                    p.b,
                    p.c,
                    doc.label,
                )?))
            }
            other => Err(Error::Config(format!("unknown instance kind {other:?}"))),
        }
    }

    /// Dense matrix for CSV export: the realized score matrix (one column)
    /// or the materialized self-attention matrix.
    pub fn matrix(&self) -> Result<Matrix> {
        match self {
            Instance::Score(s) => Ok(realize_matrix(s, 1)?.a),
            Instance::SelfAttn(s) => s.materialize(),
        }
    }
}

/// Write `a` as CSV with a `c1,…,cd` header, one matrix row per line.
pub fn write_matrix_csv<W: Write>(a: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=a.cols()).map(|i| format!("c{i}")))?;
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing() {
        assert_eq!("d1".parse::<Label>().unwrap(), Label::D1);
        assert_eq!("D0".parse::<Label>().unwrap(), Label::D0);
        assert!("d2".parse::<Label>().is_err());
        assert_eq!(serde_json::to_string(&Label::D1).unwrap(), "\"d1\"");
    }

    #[test]
    fn score_samples_respect_labels() {
        for seed in 0..20 {
            let s = sample_score(4, Label::D1, seed).unwrap();
            let spikes = s.entries().iter().filter(|&&x| x == SPIKE).count();
            assert_eq!(spikes, 1);
            let j = s.spike_index().unwrap();
            assert_eq!(s.entries()[j], SPIKE);
            assert!((0..4)
                .filter(|&i| i != j)
                .all(|i| (2.0..=4.0).contains(&s.entries()[i])));

            let s0 = sample_score(4, Label::D0, seed).unwrap();
            assert!(s0.spike_index().is_none());
            assert!(s0.entries().iter().all(|x| (2.0..=4.0).contains(x)));
        }
        assert_eq!(
            sample_score(16, Label::D1, 9).unwrap(),
            sample_score(16, Label::D1, 9).unwrap()
        );
        assert!(sample_score(1, Label::D0, 0).is_err());
    }

    #[test]
    fn realize_small() {
        let s = ScoreVector::new(vec![2.0, 4.0], None, Label::D0).unwrap();
        let p = realize_matrix(&s, 3).unwrap();
        assert_eq!(
            p.a,
            Matrix::from_rows(&[vec![2.0, 0.0, 0.0], vec![4.0, 0.0, 0.0]]).unwrap()
        );
        assert_eq!(p.x.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(p.a.mul_vec(&p.x).unwrap().as_slice(), s.entries());
    }

    #[test]
    fn nine_token_layout() {
        let inst = build_selfattn_instance(9, 5, 3, 1, 1.0, 0.5, 0.5, Label::D1).unwrap();
        let m = inst.materialize().unwrap();
        #[rustfmt::skip]
        let expected = [
            [0.0, 0.5, 0.0, 0.0, 0.5],
            [1.0, 0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 0.5, 0.5],
            [0.0, 0.5, 0.0, 0.0, 0.5],
            [0.0, 0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 0.5, 0.5],
            [0.0, 0.5, 0.0, 0.0, 0.5],
            [0.0, 0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 0.5, 0.5],
        ];
        for (j, row) in expected.iter().enumerate() {
            assert_eq!(m.row(j), row);
        }
    }

    #[test]
    fn validation_names_constraint() {
        let err = build_selfattn_instance(9, 5, 3, 1, 1.0, 0.4, 0.5, Label::D1).unwrap_err();
        assert!(err.to_string().contains("b + c = 1"), "{err}");
        let err = build_selfattn_instance(10, 5, 3, 1, 1.0, 0.5, 0.5, Label::D1).unwrap_err();
        assert!(err.to_string().contains("n = (d−2)·t"), "{err}");
        let err = build_selfattn_instance(9, 5, 3, 9, 1.0, 0.5, 0.5, Label::D1).unwrap_err();
        assert!(err.to_string().contains("j3"), "{err}");
        let err = build_selfattn_instance(9, 5, 3, 1, 0.5, 0.5, 0.5, Label::D1).unwrap_err();
        assert!(err.to_string().contains("a ≥ 0.7"), "{err}");
        let err = build_selfattn_instance(9, 5, 3, 1, 0.1, 0.5, 0.5, Label::D0).unwrap_err();
        assert!(err.to_string().contains("a ∈ (0, 0.1)"), "{err}");
        let err = build_selfattn_instance(9, 5, 3, 1, 1.0, 0.95, 0.05, Label::D1).unwrap_err();
        assert!(err.to_string().contains("c ≥ 0.1"), "{err}");
    }

    #[test]
    fn structural_rows_match_materialized() {
        let inst = build_selfattn_instance(12, 6, 3, 7, 0.05, 0.3, 0.7, Label::D0).unwrap();
        let m = inst.materialize().unwrap();
        let mut row = vec![0.0; 6];
        for j in 0..12 {
            inst.row_into(j, &mut row);
            assert_eq!(row.as_slice(), m.row(j));
        }
        assert_eq!(TokenRows::row_sums(&inst), m.row_sums());
        let w: Vec<f64> = (0..12).map(|j| (j as f64 + 1.0) / 78.0).collect();
        let lhs = inst.weighted_row_sum(&w);
        let rhs = m.weighted_row_sum(&w);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn document_round_trip() {
        let inst = Instance::SelfAttn(
            build_selfattn_instance(9, 5, 3, 1, 1.0, 0.5, 0.5, Label::D1).unwrap(),
        );
        let doc = inst.to_document(Some(7));
        assert_eq!(doc.params["j3"], 2);
        let text = serde_json::to_string(&doc).unwrap();
        let back: InstanceDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(Instance::from_document(&back).unwrap(), inst);

        let s = Instance::Score(sample_score(8, Label::D1, 3).unwrap());
        assert_eq!(Instance::from_document(&s.to_document(Some(3))).unwrap(), s);
    }

    #[test]
    fn csv_export() {
        let inst = build_selfattn_instance(3, 3, 3, 0, 1.0, 0.5, 0.5, Label::D1).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&inst.materialize().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "c1,c2,c3\n1,0.5,0.5\n0,0.5,0.5\n0,0.5,0.5\n");
    }
}
