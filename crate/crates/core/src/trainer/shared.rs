//! Parameter store shared by all workers, updated by a single Adam optimizer
//! under a mutex.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::linalg::norm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam step on `params`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Scales `grads` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let n = norm(grads);
    if n > max_norm && n > 0.0 {
        let s = max_norm / n;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// One accepted update, kept when logging is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplyRecord {
    pub worker: usize,
    pub version: u64,
    pub grads: Vec<f64>,
}

#[derive(Debug)]
struct Inner {
    params: Vec<f64>,
    adam: AdamState,
    version: u64,
    rejected: u64,
    log: Option<Vec<ApplyRecord>>,
}

#[derive(Debug)]
pub struct SharedParams {
    inner: Mutex<Inner>,
    lr: f64,
    clip_norm: f64,
    adam: AdamConfig,
}

/// A consistent copy of the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub version: u64,
}

impl SharedParams {
    pub fn new(params: Vec<f64>, lr: f64, clip_norm: f64) -> Self {
        let adam = AdamState::new(params.len());
        Self::restore(params, adam, 0, lr, clip_norm)
    }

    pub fn restore(params: Vec<f64>, adam: AdamState, version: u64, lr: f64, clip_norm: f64) -> Self {
        SharedParams {
            inner: Mutex::new(Inner {
                params,
                adam,
                version,
                rejected: 0,
                log: None,
            }),
            lr,
            clip_norm,
            adam: AdamConfig::default(),
        }
    }

    /// Record every accepted gradient from now on.
    pub fn enable_log(&self) {
        self.lock().log.get_or_insert_with(Vec::new);
    }

    pub fn take_log(&self) -> Vec<ApplyRecord> {
        self.lock().log.take().unwrap_or_default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // a panicking worker cannot leave the store half-updated: every
        // mutation below happens after all checks
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn len(&self) -> usize {
        self.lock().params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn version(&self) -> u64 {
        self.lock().version
    }

    pub fn rejected(&self) -> u64 {
        self.lock().rejected
    }

    /// Copies the parameters into `out`; returns the version they belong to.
    pub fn read_into(&self, out: &mut Vec<f64>) -> u64 {
        let g = self.lock();
        out.clear();
        out.extend_from_slice(&g.params);
        g.version
    }

    pub fn snapshot(&self) -> Snapshot {
        let g = self.lock();
        Snapshot {
            params: g.params.clone(),
            adam: g.adam.clone(),
            version: g.version,
        }
    }

    /// Clips and applies one gradient. Non-finite gradients are rejected and
    /// counted without touching the parameters.
    pub fn apply(&self, worker: usize, grads: &[f64]) -> Result<u64> {
        let mut g = self.lock();
        if grads.len() != g.params.len() {
            return Err(Error::shape("gradient", g.params.len(), grads.len()));
        }
        if grads.iter().any(|v| !v.is_finite()) {
            g.rejected += 1;
            return Err(Error::NonFiniteGradient);
        }
        let mut clipped = grads.to_vec();
        clip_global_norm(&mut clipped, self.clip_norm);
        let inner = &mut *g;
        inner.adam.update(&mut inner.params, &clipped, self.lr, &self.adam);
        assert!(inner.params.iter().all(|v| v.is_finite()), "parameters became non-finite");
        inner.version += 1;
        let version = inner.version;
        if let Some(log) = &mut inner.log {
            log.push(ApplyRecord {
                worker,
                version,
                grads: grads.to_vec(),
            });
        }
        Ok(version)
    }
}
