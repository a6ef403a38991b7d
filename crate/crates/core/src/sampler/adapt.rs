//! Warmup adaptation: dual averaging of the step size and a mass matrix
//! (diagonal or dense) estimated over doubling windows.

#[derive(Debug, Clone)]
pub struct DualAverageSettings {
    pub target: f64,
    pub kappa: f64,
    pub t0: f64,
    pub gamma: f64,
}

impl DualAverageSettings {
    pub fn new(target: f64) -> Self {
        DualAverageSettings {
            target,
            kappa: 0.75,
            t0: 10.0,
            gamma: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualAverage {
    settings: DualAverageSettings,
    mu: f64,
    count: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAverage {
    pub fn new(settings: DualAverageSettings, initial_step: f64) -> Self {
        let mut da = DualAverage {
            settings,
            mu: 0.0,
            count: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        da.restart(initial_step);
        da
    }

    /// Re-centres the averaging on `10 * step`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.count = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size to use.
    pub fn advance(&mut self, accept_stat: f64) -> f64 {
        self.count += 1.0;
        let accept_stat = if accept_stat.is_nan() { 0.0 } else { accept_stat.min(1.0) };
        let eta = 1.0 / (self.count + self.settings.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.settings.target - accept_stat);
        let x = self.mu - self.s_bar * self.count.sqrt() / self.settings.gamma;
        let weight = self.count.powf(-self.settings.kappa);
        self.x_bar = (1.0 - weight) * self.x_bar + weight * x;
        x.exp()
    }

    /// Averaged step size used once warmup ends.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    /// Sample variance shrunk toward 1e-3 with weight 5 / (n + 5).
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = if n > 1.0 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0.0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

/// Welford accumulator for the full covariance matrix.
#[derive(Debug, Clone)]
pub struct RunningCovariance {
    n: f64,
    mean: Vec<f64>,
    /// Row-major sums of centered cross products.
    m2: Vec<f64>,
}

impl RunningCovariance {
    pub fn new(dim: usize) -> Self {
        RunningCovariance {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn add(&mut self, x: &[f64]) {
        let d = self.dim();
        self.n += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / self.n;
        }
        for i in 0..d {
            let after_i = x[i] - self.mean[i];
            for j in 0..d {
                self.m2[i * d + j] += after_i * delta[j];
            }
        }
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    /// Row-major sample covariance shrunk toward 1e-3 times the identity
    /// with weight 5 / (n + 5).
    pub fn regularized_covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let n = self.n;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let cov = if n > 1.0 {
                    self.m2[i * d + j] / (n - 1.0)
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
                // symmetrize away rounding differences between the two triangles
                let cov_t = if n > 1.0 { self.m2[j * d + i] / (n - 1.0) } else { cov };
                out[i * d + j] = (n / (n + 5.0)) * 0.5 * (cov + cov_t);
            }
            out[i * d + i] += 1e-3 * (5.0 / (n + 5.0));
        }
        out
    }

    pub fn reset(&mut self) {
        self.n = 0.0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

/// Schedule of slow (metric) windows inside warmup: a fast initial buffer,
/// doubling slow windows, and a fast terminal buffer.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
    counter: usize,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75usize, 50usize, 25usize);
        if warmup < 20 {
            // too short for metric adaptation; only the step size adapts
            return WindowSchedule {
                warmup,
                init_buffer: warmup,
                term_buffer: 0,
                window_size: 0,
                next_window_end: usize::MAX,
                counter: 0,
            };
        }
        if init_buffer + base_window + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base_window = warmup - (init_buffer + term_buffer);
        }
        WindowSchedule {
            warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            next_window_end: init_buffer + base_window - 1,
            counter: 0,
        }
    }

    fn last_window_end(&self) -> usize {
        self.warmup - self.term_buffer - 1
    }

    /// Whether the current iteration's draw feeds the variance estimate.
    pub fn in_slow_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn at_window_end(&self) -> bool {
        self.counter == self.next_window_end && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        if self.next_window_end == self.last_window_end() {
            return;
        }
        self.window_size *= 2;
        self.next_window_end = self.counter + self.window_size;
        if self.next_window_end != self.last_window_end() {
            let boundary = self.next_window_end + 2 * self.window_size;
            if boundary >= self.last_window_end() {
                self.next_window_end = self.last_window_end();
            }
        }
    }

    /// Advances one iteration; true when a slow window just closed.
    pub fn step(&mut self) -> bool {
        let closed = self.in_slow_window() && self.at_window_end();
        if closed {
            self.compute_next_window();
        }
        self.counter += 1;
        closed
    }
}
