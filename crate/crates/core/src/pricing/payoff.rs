//! Path-dependent payoffs and their discounted evaluation.

use rand::Rng;

use super::PricingError;

/// Dates closer than this (relative to `max(1, t)`) are the same date.
pub const DATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    /// Call on the arithmetic mean of all observations, `X_0` included.
    AsianCall {
        strike: f64,
    },
    /// Call knocked out when the price reaches `barrier` at a monitoring date,
    /// or, with `bridge_correction`, between two of them.
    UpOutBarrierCall {
        strike: f64,
        barrier: f64,
        bridge_correction: bool,
    },
    /// Pays `coupons[i]` at the first call date where `X ≥ X_0·barrier_multiplier`,
    /// otherwise `X_T / X_0` at maturity. Unit notional.
    AutoCallable {
        call_dates: Vec<f64>,
        coupons: Vec<f64>,
        barrier_multiplier: f64,
    },
    VanillaCall {
        strike: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    kind: PayoffKind,
    rate: f64,
    maturity: f64,
}

/// How the barrier bridge factor enters a single path's payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BridgeMode {
    /// Multiply by the survival probability `Π p_k`.
    #[default]
    Expectation,
    /// Knock out with probability `1 − p_k` per step.
    Bernoulli,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, rate: f64, maturity: f64) -> Result<Self, PricingError> {
        let bad = |m: &str| Err(PricingError::InvalidPayoff(m.into()));
        if !rate.is_finite() {
            return bad("rate must be finite");
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return bad("maturity must be positive");
        }
        match &kind {
            PayoffKind::AsianCall { strike } | PayoffKind::VanillaCall { strike } => {
                if !(strike.is_finite() && *strike >= 0.0) {
                    return bad("strike must be finite and non-negative");
                }
            }
            PayoffKind::UpOutBarrierCall { strike, barrier, .. } => {
                if !(strike.is_finite() && *strike >= 0.0) {
                    return bad("strike must be finite and non-negative");
                }
                if !(barrier.is_finite() && barrier > strike) {
                    return bad("barrier must exceed the strike");
                }
            }
            PayoffKind::AutoCallable {
                call_dates,
                coupons,
                barrier_multiplier,
            } => {
                if call_dates.is_empty() || call_dates.len() != coupons.len() {
                    return bad("need one coupon per call date and at least one call date");
                }
                if call_dates.windows(2).any(|w| !(w[1] > w[0]))
                    || call_dates[0] <= 0.0
                    || call_dates[call_dates.len() - 1] > maturity * (1.0 + DATE_TOL)
                {
                    return bad("call dates must be increasing within (0, T]");
                }
                if coupons.iter().any(|q| !q.is_finite()) {
                    return bad("coupons must be finite");
                }
                if !(barrier_multiplier.is_finite() && *barrier_multiplier > 0.0) {
                    return bad("barrier multiplier must be positive");
                }
            }
        }
        Ok(Self { kind, rate, maturity })
    }

    pub fn asian_call(strike: f64, rate: f64, maturity: f64) -> Result<Self, PricingError> {
        Self::new(PayoffKind::AsianCall { strike }, rate, maturity)
    }

    pub fn vanilla_call(strike: f64, rate: f64, maturity: f64) -> Result<Self, PricingError> {
        Self::new(PayoffKind::VanillaCall { strike }, rate, maturity)
    }

    pub fn up_out_barrier_call(
        strike: f64,
        barrier: f64,
        bridge_correction: bool,
        rate: f64,
        maturity: f64,
    ) -> Result<Self, PricingError> {
        Self::new(
            PayoffKind::UpOutBarrierCall {
                strike,
                barrier,
                bridge_correction,
            },
            rate,
            maturity,
        )
    }

    pub fn auto_callable(
        call_dates: Vec<f64>,
        coupons: Vec<f64>,
        barrier_multiplier: f64,
        rate: f64,
        maturity: f64,
    ) -> Result<Self, PricingError> {
        Self::new(
            PayoffKind::AutoCallable {
                call_dates,
                coupons,
                barrier_multiplier,
            },
            rate,
            maturity,
        )
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Short label used in reports.
    pub fn name(&self) -> &'static str {
        match self.kind {
            PayoffKind::AsianCall { .. } => "asian_call",
            PayoffKind::UpOutBarrierCall { .. } => "up_out_barrier_call",
            PayoffKind::AutoCallable { .. } => "auto_callable",
            PayoffKind::VanillaCall { .. } => "vanilla_call",
        }
    }

    /// Resolves call dates to indices of `times` (which start at 0 and end at
    /// the maturity) and precomputes discount factors.
    pub fn bind(&self, times: &[f64]) -> Result<BoundPayoff, PricingError> {
        let same = |a: f64, b: f64| (a - b).abs() <= DATE_TOL * a.abs().max(1.0);
        let last = *times
            .last()
            .ok_or_else(|| PricingError::DateMismatch("empty date list".into()))?;
        if times.len() < 2 || times[0] != 0.0 {
            return Err(PricingError::DateMismatch("dates must start at 0".into()));
        }
        if !same(last, self.maturity) {
            return Err(PricingError::DateMismatch(format!(
                "last date {last} differs from maturity {}",
                self.maturity
            )));
        }
        let mut calls = Vec::new();
        if let PayoffKind::AutoCallable {
            call_dates, coupons, ..
        } = &self.kind
        {
            for (&t, &q) in call_dates.iter().zip(coupons) {
                let idx = times
                    .iter()
                    .position(|&s| same(s, t))
                    .ok_or_else(|| PricingError::DateMismatch(format!("call date {t} is not an observation date")))?;
                calls.push((idx, (-self.rate * t).exp() * q));
            }
        }
        Ok(BoundPayoff {
            kind: self.kind.clone(),
            steps: times.len() - 1,
            discount: (-self.rate * self.maturity).exp(),
            calls,
        })
    }
}

/// A payoff resolved against a fixed list of observation dates.
#[derive(Debug, Clone)]
pub struct BoundPayoff {
    kind: PayoffKind,
    steps: usize,
    discount: f64,
    /// (date index, discounted coupon) per call date.
    calls: Vec<(usize, f64)>,
}

/// Probability that a Brownian bridge from `a` to `b` with variance `var`
/// stays below `barrier`.
pub fn bridge_survival(a: f64, b: f64, barrier: f64, var: f64) -> f64 {
    if a >= barrier || b >= barrier {
        return 0.0;
    }
    if var <= 0.0 {
        return 1.0;
    }
    -(-2.0 * (barrier - a) * (barrier - b) / var).exp_m1()
}

impl BoundPayoff {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Discounted payoff of `path` (length `steps + 1`, `path[0] = X_0`).
    /// `variance(k)` is the one-step conditional variance from date `k`; it is
    /// only queried by bridge-corrected barriers.
    pub fn evaluate<R, V>(&self, path: &[f64], variance: V, bridge: BridgeMode, rng: &mut R) -> f64
    where
        R: Rng + ?Sized,
        V: Fn(usize) -> f64,
    {
        debug_assert_eq!(path.len(), self.steps + 1);
        let terminal = path[self.steps];
        match &self.kind {
            PayoffKind::VanillaCall { strike } => self.discount * (terminal - strike).max(0.0),
            PayoffKind::AsianCall { strike } => {
                let avg = path.iter().sum::<f64>() / path.len() as f64;
                self.discount * (avg - strike).max(0.0)
            }
            PayoffKind::UpOutBarrierCall {
                strike,
                barrier,
                bridge_correction,
            } => {
                let intrinsic = (terminal - strike).max(0.0);
                if intrinsic == 0.0 {
                    return 0.0;
                }
                if !bridge_correction {
                    return if path.iter().all(|&x| x < *barrier) {
                        self.discount * intrinsic
                    } else {
                        0.0
                    };
                }
                let mut survival = 1.0;
                for k in 0..self.steps {
                    let p = bridge_survival(path[k], path[k + 1], *barrier, variance(k));
                    match bridge {
                        BridgeMode::Expectation => survival *= p,
                        BridgeMode::Bernoulli => {
                            if p < 1.0 && rng.random::<f64>() >= p {
                                return 0.0;
                            }
                        }
                    }
                    if survival == 0.0 {
                        return 0.0;
                    }
                }
                self.discount * intrinsic * survival
            }
            PayoffKind::AutoCallable { barrier_multiplier, .. } => {
                let x0 = path[0];
                let level = x0 * barrier_multiplier;
                for &(idx, coupon) in &self.calls {
                    if path[idx] >= level {
                        return coupon;
                    }
                }
                self.discount * terminal / x0
            }
        }
    }
}
