//! Shared cost and wall-clock accounting. Admission control is pessimistic:
//! a call is admitted only while the money already spent is strictly below
//! the limit, so a zero budget admits nothing.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum BudgetError {
    #[error("cost budget exhausted")]
    CostExhausted,
    #[error("time budget exhausted")]
    TimeExhausted,
}

#[derive(Debug)]
pub struct BudgetLedger {
    cost_limit_usd: f64,
    time_limit: Duration,
    started: Instant,
    spent_usd: Mutex<f64>,
}

impl BudgetLedger {
    pub fn new(cost_limit_usd: f64, time_limit: Duration) -> Self {
        BudgetLedger {
            cost_limit_usd,
            time_limit,
            started: Instant::now(),
            spent_usd: Mutex::new(0.0),
        }
    }

    pub fn unlimited() -> Self {
        BudgetLedger::new(f64::INFINITY, Duration::MAX)
    }

    /// Check admission before dispatching a billable call.
    pub fn admit(&self) -> Result<(), BudgetError> {
        if self.started.elapsed() >= self.time_limit {
            return Err(BudgetError::TimeExhausted);
        }
        if *self.spent_usd.lock().unwrap() >= self.cost_limit_usd {
            return Err(BudgetError::CostExhausted);
        }
        Ok(())
    }

    pub fn charge(&self, cost_usd: f64) {
        *self.spent_usd.lock().unwrap() += cost_usd.max(0.0);
    }

    pub fn spent_usd(&self) -> f64 {
        *self.spent_usd.lock().unwrap()
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn cost_limit_usd(&self) -> f64 {
        self.cost_limit_usd
    }
}
