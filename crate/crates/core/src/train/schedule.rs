use super::TrainConfig;

/// Triangular learning-rate cycle that starts at `lr_max`, falls linearly
/// to `lr_min` over one half-cycle and climbs back over the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicSchedule {
    pub lr_min: f64,
    pub lr_max: f64,
    pub half_cycle_steps: usize,
}

impl CyclicSchedule {
    pub fn new(config: &TrainConfig, steps_per_epoch: usize) -> Self {
        Self {
            lr_min: config.lr_min,
            lr_max: config.lr_max,
            half_cycle_steps: (config.cycle_length * steps_per_epoch).max(1),
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let half = self.half_cycle_steps;
        let pos = step % (2 * half);
        let frac = if pos < half {
            pos as f64 / half as f64
        } else {
            (2 * half - pos) as f64 / half as f64
        };
        (self.lr_max * (1.0 - frac) + self.lr_min * frac).clamp(self.lr_min, self.lr_max)
    }
}

pub fn cyclic_lr(step: usize, config: &TrainConfig, steps_per_epoch: usize) -> f64 {
    CyclicSchedule::new(config, steps_per_epoch).lr(step)
}
