/// One-cycle learning rate: cosine warm-up from `peak / div` to `peak`
/// over the first `pct` of steps, then cosine decay to
/// `peak / (div * final_div)`. Steps past the end keep the final rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    pub peak: f64,
    pub total_steps: usize,
    pub pct: f64,
    pub div: f64,
    pub final_div: f64,
}

impl OneCycle {
    pub fn new(peak: f64, total_steps: usize) -> Self {
        Self {
            peak,
            total_steps: total_steps.max(1),
            pct: 0.3,
            div: 25.0,
            final_div: 1e4,
        }
    }

    pub fn rate(&self, step: usize) -> f64 {
        let initial = self.peak / self.div;
        let last = initial / self.final_div;
        let warm = ((self.pct * self.total_steps as f64).round() as usize).max(1);
        let cos = |from: f64, to: f64, t: f64| to + (from - to) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0;
        if step < warm {
            cos(initial, self.peak, step as f64 / warm as f64)
        } else if step < self.total_steps {
            let span = (self.total_steps - warm).max(1);
            cos(self.peak, last, (step - warm) as f64 / span as f64)
        } else {
            last
        }
    }
}
