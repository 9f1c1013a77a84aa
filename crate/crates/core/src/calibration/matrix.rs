use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::consensus::AnnotationRecord;
use crate::value_system::ValueId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub post_id: String,
    pub value: ValueId,
}

/// Rows are (post, value) pairs, columns are raters; every cell present.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: Vec<RowKey>,
    raters: Vec<String>,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(
        rows: Vec<RowKey>,
        raters: Vec<String>,
        data: Vec<f64>,
    ) -> Result<Self, CalibrationError> {
        if data.len() != rows.len() * raters.len() {
            return Err(CalibrationError::Shape(format!(
                "{} cells for {} rows x {} raters",
                data.len(),
                rows.len(),
                raters.len()
            )));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(CalibrationError::Shape(format!("non-finite cell {x}")));
        }
        Ok(DenseMatrix { rows, raters, data })
    }

    /// Posts x 19 values from records where every rater rated every post.
    pub fn from_records(records: &[AnnotationRecord]) -> Result<Self, CalibrationError> {
        let posts: BTreeSet<&str> = records.iter().map(|r| r.post_id.as_str()).collect();
        let raters: BTreeSet<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
        let mut cell: BTreeMap<(&str, &str), &AnnotationRecord> = BTreeMap::new();
        for r in records {
            if cell.insert((&r.post_id, &r.rater_id), r).is_some() {
                return Err(CalibrationError::Shape(format!(
                    "duplicate rating of `{}` by `{}`",
                    r.post_id, r.rater_id
                )));
            }
        }
        let mut rows = Vec::with_capacity(posts.len() * ValueId::ALL.len());
        let mut data = Vec::with_capacity(rows.capacity() * raters.len());
        for p in &posts {
            for v in ValueId::ALL {
                rows.push(RowKey {
                    post_id: p.to_string(),
                    value: v,
                });
                for r in &raters {
                    let rec = cell
                        .get(&(*p, *r))
                        .ok_or_else(|| CalibrationError::MissingCell {
                            post: p.to_string(),
                            rater: r.to_string(),
                        })?;
                    data.push(rec.ratings.get(v).as_f64());
                }
            }
        }
        DenseMatrix::new(rows, raters.iter().map(|s| s.to_string()).collect(), data)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.raters.len()
    }

    pub fn rows(&self) -> &[RowKey] {
        &self.rows
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.raters.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.raters.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// CSV with header `post_id,value,<rater ids...>`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["post_id".to_string(), "value".to_string()];
        header.extend(self.raters.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (i, k) in self.rows.iter().enumerate() {
            let mut rec = vec![k.post_id.clone(), k.value.key().to_string()];
            rec.extend(self.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, CalibrationError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| CalibrationError::Csv(e.to_string()))?
            .clone();
        if header.len() < 3 || &header[0] != "post_id" || &header[1] != "value" {
            return Err(CalibrationError::Csv(
                "header must be post_id,value,<raters...>".into(),
            ));
        }
        let raters: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| CalibrationError::Csv(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(CalibrationError::Csv(format!(
                    "row {} has {} fields",
                    line + 1,
                    rec.len()
                )));
            }
            let value: ValueId = rec[1].parse().map_err(|_| {
                CalibrationError::Csv(format!("row {}: unknown value `{}`", line + 1, &rec[1]))
            })?;
            rows.push(RowKey {
                post_id: rec[0].to_string(),
                value,
            });
            for f in rec.iter().skip(2) {
                let x: f64 = f.trim().parse().map_err(|_| {
                    CalibrationError::Csv(format!("row {}: bad cell `{f}`", line + 1))
                })?;
                data.push(x);
            }
        }
        DenseMatrix::new(rows, raters, data)
    }
}

/// Subtracts each row's mean.
pub fn demean_rows(m: &DenseMatrix) -> DenseMatrix {
    let cols = m.n_cols();
    let mut data = m.data.clone();
    if cols > 0 {
        for row in data.chunks_mut(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            row.iter_mut().for_each(|x| *x -= mean);
        }
    }
    DenseMatrix {
        rows: m.rows.clone(),
        raters: m.raters.clone(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keys(n: usize) -> Vec<RowKey> {
        (0..n)
            .map(|i| RowKey {
                post_id: format!("p{i}"),
                value: ValueId::Caring,
            })
            .collect()
    }

    fn raters(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn demean_hand_rows() {
        let m = DenseMatrix::new(keys(1), raters(3), vec![3.0, 3.0, 3.0]).unwrap();
        assert_eq!(demean_rows(&m).row(0), &[0.0, 0.0, 0.0]);
        let m = DenseMatrix::new(keys(1), raters(2), vec![0.0, 6.0]).unwrap();
        assert_eq!(demean_rows(&m).row(0), &[-3.0, 3.0]);
    }

    #[test]
    fn csv_round_trip() {
        let m = DenseMatrix::new(keys(2), raters(2), vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        assert_eq!(DenseMatrix::from_csv(&m.to_csv()).unwrap(), m);
        assert!(DenseMatrix::from_csv("a,b\n").is_err());
    }

    #[test]
    fn from_records_requires_dense() {
        use crate::consensus::vv;
        let recs = vec![
            AnnotationRecord::new("p", "a", vv(&[1])),
            AnnotationRecord::new("p", "b", vv(&[2])),
            AnnotationRecord::new("q", "a", vv(&[3])),
        ];
        assert!(matches!(
            DenseMatrix::from_records(&recs),
            Err(CalibrationError::MissingCell { .. })
        ));
        let m = DenseMatrix::from_records(&recs[..2]).unwrap();
        assert_eq!(m.n_rows(), 19);
        assert_eq!(m.row(0), &[1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn rows_have_zero_mean(cells in prop::collection::vec(0u8..=6, 40)) {
            let data: Vec<f64> = cells.into_iter().map(f64::from).collect();
            let m = DenseMatrix::new(keys(8), raters(5), data).unwrap();
            let d = demean_rows(&m);
            for i in 0..8 {
                let mean = d.row(i).iter().sum::<f64>() / 5.0;
                prop_assert!(mean.abs() < 1e-12);
            }
        }
    }
}
