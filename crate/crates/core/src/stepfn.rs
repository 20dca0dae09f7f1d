//! Right-continuous step functions over time.

use serde::{Deserialize, Serialize};

/// A right-continuous step function with jumps at strictly increasing times.
///
/// Evaluation at `t` returns the value attached to the largest jump time
/// `<= t`, and `initial` before the first jump. Cumulative hazards use
/// `initial = 0`; survival curves use `initial = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    /// A step function starting at 0 (cumulative-hazard convention).
    ///
    /// Panics if `times` is not strictly increasing or lengths differ.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        Self::with_initial(times, values, 0.0)
    }

    /// A step function with an explicit pre-first-jump value.
    pub fn with_initial(times: Vec<f64>, values: Vec<f64>, initial: f64) -> Self {
        assert_eq!(times.len(), values.len(), "times/values length mismatch");
        assert!(
            times.windows(2).all(|w| w[0] < w[1]),
            "jump times must be strictly increasing"
        );
        Self {
            times,
            values,
            initial,
        }
    }

    /// The constant function `value`.
    pub fn constant(value: f64) -> Self {
        Self::with_initial(Vec::new(), Vec::new(), value)
    }

    pub fn eval(&self, t: f64) -> f64 {
        // index of first jump time strictly greater than t
        let idx = self.times.partition_point(|&jt| jt <= t);
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    /// Left limit: the value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&jt| jt < t);
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// True if the step values never decrease (hazard-like).
    pub fn is_non_decreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    /// True if the step values never increase (survival-like).
    pub fn is_non_increasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v <= prev;
            prev = v;
            ok
        })
    }
}
