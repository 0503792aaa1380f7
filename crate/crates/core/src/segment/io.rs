use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Segment;

/// JSON form of a segment: `{r, nodes, values, derivs[, derivs_left]}`.
///
/// `derivs` holds the right derivative at each node (the left one at `s = 0`).
/// `derivs_left` is only written when some interior node carries a kink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct SegmentJson<T> {
    pub r: T,
    pub nodes: Vec<T>,
    pub values: Vec<Vec<T>>,
    pub derivs: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivs_left: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> From<&Segment<T>> for SegmentJson<T> {
    fn from(seg: &Segment<T>) -> Self {
        let rows = |flat: &[T]| flat.chunks(seg.dim()).map(<[T]>::to_vec).collect::<Vec<_>>();
        SegmentJson {
            r: seg.delay(),
            nodes: seg.nodes(),
            values: rows(seg.values_flat()),
            derivs: rows(seg.d_right_flat()),
            derivs_left: seg.has_kinks().then(|| rows(seg.d_left_flat())),
        }
    }
}

impl<T: Scalar> TryFrom<SegmentJson<T>> for Segment<T> {
    type Error = Error;

    fn try_from(js: SegmentJson<T>) -> Result<Self> {
        let seg = Segment::from_nodes(&js.nodes, js.values, js.derivs)?;
        if (seg.delay() - js.r).abs() > T::grid_tol() * js.r.abs().max(T::one()) {
            return Err(Error::InvalidSegment(format!(
                "r = {} disagrees with first node {}",
                js.r,
                -seg.delay()
            )));
        }
        match js.derivs_left {
            None => Ok(seg),
            Some(left) => {
                let dim = seg.dim();
                if left.len() != seg.node_count() || left.iter().any(|row| row.len() != dim) {
                    return Err(Error::InvalidSegment("derivs_left has the wrong shape".into()));
                }
                let flat: Vec<T> = left.into_iter().flatten().collect();
                Segment::from_flat(
                    seg.delay(),
                    dim,
                    seg.values_flat().to_vec(),
                    seg.d_right_flat().to_vec(),
                    flat,
                )
            }
        }
    }
}

impl<T: Scalar> Segment<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SegmentJson::from(self)).expect("segment serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let js: SegmentJson<T> = serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))?;
        Segment::try_from(js)
    }

    /// CSV with columns `s, x_1..x_n, dx_1..dx_n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|k| format!("x_{k}")));
        header.extend((1..=n).map(|k| format!("dx_{k}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.node_count() {
            let mut row = vec![fmt_num(self.node(i).to_f64_lossy())];
            row.extend(self.value(i).iter().map(|v| fmt_num(v.to_f64_lossy())));
            row.extend(self.deriv(i).iter().map(|v| fmt_num(v.to_f64_lossy())));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, `.` as decimal separator.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
