//! Policy-evaluation learning curves and their CSV export.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_return: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a point; steps must be strictly increasing.
    pub fn push(&mut self, step: usize, mean_return: f64, stderr: f64) {
        if let Some(last) = self.points.last() {
            assert!(step > last.step, "learning-curve steps must strictly increase");
        }
        self.points.push(CurvePoint { step, mean_return, stderr });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_return,stderr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.step, p.mean_return, p.stderr));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_the_documented_header_and_order() {
        let mut c = LearningCurve::new();
        c.push(0, -10.0, 0.5);
        c.push(500, -4.25, 0.125);
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,mean_return,stderr"));
        assert_eq!(lines.next(), Some("0,-10,0.5"));
        assert_eq!(lines.next(), Some("500,-4.25,0.125"));
    }

    #[test]
    #[should_panic(expected = "strictly increase")]
    fn non_increasing_steps_panic() {
        let mut c = LearningCurve::new();
        c.push(5, 0.0, 0.0);
        c.push(5, 1.0, 0.0);
    }
}
