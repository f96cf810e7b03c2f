use std::io::Write;

use serde::Serialize;

use super::GridSpec;

/// Streaming mean and variance with the pairwise merge of Chan et al.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, o: &Welford) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *o;
            return;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.count as f64 * o.count as f64 / n as f64;
        self.count = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }

    pub fn from_slice(v: &[f64]) -> Welford {
        let mut w = Welford::default();
        v.iter().for_each(|&x| w.push(x));
        w
    }
}

/// Per-time, per-component accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeStats {
    n: usize,
    acc: Vec<Welford>,
}

impl TimeStats {
    pub fn new(times: usize, n: usize) -> TimeStats {
        TimeStats {
            n,
            acc: vec![Welford::default(); times * n],
        }
    }

    pub fn push_path(&mut self, x: &[Vec<f64>]) {
        for (s, xs) in x.iter().enumerate() {
            for (i, v) in xs.iter().enumerate() {
                self.acc[s * self.n + i].push(*v);
            }
        }
    }

    pub fn merge(&mut self, o: &TimeStats) {
        for (a, b) in self.acc.iter_mut().zip(&o.acc) {
            a.merge(b);
        }
    }

    pub fn report(&self, spec: &GridSpec, excluded: usize) -> StatsReport {
        let times = self.acc.len() / self.n.max(1);
        let row = |s: usize, f: &dyn Fn(&Welford) -> f64| -> Vec<f64> {
            (0..self.n).map(|i| f(&self.acc[s * self.n + i])).collect()
        };
        StatsReport {
            times: (0..times).map(|s| spec.time(s)).collect(),
            mean: (0..times).map(|s| row(s, &|w| w.mean)).collect(),
            var: (0..times).map(|s| row(s, &Welford::variance)).collect(),
            se: (0..times).map(|s| row(s, &Welford::std_error)).collect(),
            n_effective: self.acc.first().map_or(0, |w| w.count as usize),
            excluded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub n_effective: usize,
    pub excluded: usize,
}

impl StatsReport {
    pub fn terminal_mean(&self) -> &[f64] {
        self.mean.last().map_or(&[], Vec::as_slice)
    }

    pub fn terminal_var(&self) -> &[f64] {
        self.var.last().map_or(&[], Vec::as_slice)
    }

    pub fn terminal_se(&self) -> &[f64] {
        self.se.last().map_or(&[], Vec::as_slice)
    }

    /// Columns `t, mean_i, var_i, se_i` (components numbered from 1).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.mean.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        for i in 1..=n {
            header.extend([format!("mean_{i}"), format!("var_{i}"), format!("se_{i}")]);
        }
        w.write_record(&header)?;
        for (s, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            for i in 0..n {
                rec.extend([
                    self.mean[s][i].to_string(),
                    self.var[s][i].to_string(),
                    self.se[s][i].to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Asymptotic two-sample Kolmogorov-Smirnov constant at the 0.1% level,
/// `sqrt(-ln(0.0005) / 2)`.
pub const KS_CRITICAL_0_001: f64 = 1.9495;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
    pub n1: usize,
    pub n2: usize,
    pub reject: bool,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n1 && j < n2 {
        let v = a[i].min(b[j]);
        while i < n1 && a[i] <= v {
            i += 1;
        }
        while j < n2 && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let threshold = if n1 == 0 || n2 == 0 {
        f64::INFINITY
    } else {
        KS_CRITICAL_0_001 * (((n1 + n2) as f64) / (n1 as f64 * n2 as f64)).sqrt()
    };
    KsResult {
        statistic: d,
        threshold,
        n1,
        n2,
        reject: d > threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 0.01 - 3.0).collect();
        let all = Welford::from_slice(&v);
        let mut a = Welford::from_slice(&v[..337]);
        a.merge(&Welford::from_slice(&v[337..]));
        assert_eq!(a.count, all.count);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.5).abs() <= 0.002 + 1e-12);
        assert!(r.reject);
    }

    #[test]
    fn csv_header() {
        let spec = GridSpec::new(0.0, 1.0, 0.5).unwrap();
        let mut ts = TimeStats::new(3, 2);
        ts.push_path(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]]);
        let mut buf = Vec::new();
        ts.report(&spec, 0).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mean_1,var_1,se_1,mean_2,var_2,se_2\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
