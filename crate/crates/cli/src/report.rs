use std::fmt::Write;

/// Mean of repeated measurements; `std` only when there was more than one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::default();
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self { mean, std }
    }

    fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.2} ({:.2})", self.mean, s),
            None => format!("{:.2}", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// `N_in` value, or `Base` for the whole-vector baseline.
    pub label: String,
    pub n_in: usize,
    pub reps: usize,
    pub encryption_ms: Stat,
    pub decryption_ms: Stat,
    /// Slowest shard per query; shards run in parallel in a deployment.
    pub matching_ms: Stat,
    pub network_ms: Stat,
    pub total_ms: Stat,
    /// Rotations per query, summed over shards.
    pub rotations: u64,
    /// Fraction of queries whose best match was the query's own index.
    pub rank1: f64,
    /// Count-based matching time predicted from a timing table.
    pub predicted_ms: Option<f64>,
    /// Closed-form model time for one shard.
    pub model_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub slots: usize,
    pub m: usize,
    pub r: usize,
    pub backend: String,
    pub shards: usize,
    pub rows: Vec<BenchRow>,
    /// Model-optimal `N_in` among the benchmarked values.
    pub predicted_nin: Option<usize>,
    pub notes: Vec<String>,
}

impl BenchReport {
    fn with_std(&self) -> bool {
        self.rows.iter().any(|r| r.reps > 1)
    }

    fn with_prediction(&self) -> bool {
        self.rows.iter().any(|r| r.predicted_ms.is_some() || r.model_ms.is_some())
    }

    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Label of the row with the smallest mean matching time.
    pub fn argmin_matching(&self) -> Option<&BenchRow> {
        self.rows
            .iter()
            .filter(|r| r.label != "Base")
            .min_by(|a, b| a.matching_ms.mean.total_cmp(&b.matching_ms.mean))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "label,n_in,S,m,R,backend,shards,reps,encryption_ms,decryption_ms,matching_ms,network_ms,total_ms,rotations,rank1",
        );
        let pred = self.with_prediction();
        let std = self.with_std();
        if pred {
            s.push_str(",predicted_matching_ms,model_matching_ms");
        }
        if std {
            s.push_str(",encryption_std,decryption_std,matching_std,network_std,total_std");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{},{:.4}",
                r.label,
                r.n_in,
                self.slots,
                self.m,
                self.r,
                self.backend,
                self.shards,
                r.reps,
                r.encryption_ms.mean,
                r.decryption_ms.mean,
                r.matching_ms.mean,
                r.network_ms.mean,
                r.total_ms.mean,
                r.rotations,
                r.rank1
            );
            if pred {
                for v in [r.predicted_ms, r.model_ms] {
                    let _ = match v {
                        Some(p) => write!(s, ",{p:.3}"),
                        None => write!(s, ","),
                    };
                }
            }
            if std {
                for st in [r.encryption_ms, r.decryption_ms, r.matching_ms, r.network_ms, r.total_ms] {
                    let _ = write!(s, ",{:.3}", st.std.unwrap_or(0.0));
                }
            }
            s.push('\n');
        }
        s
    }

    /// Stages as rows and configurations as columns, cells `mean (std)`.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "## Mean 1:N matching time (ms), S = {}, m = {}, R = {}, backend = {}, shards = {}\n",
            self.slots, self.m, self.r, self.backend, self.shards
        );
        let reps: Vec<String> = self.rows.iter().map(|r| r.reps.to_string()).collect();
        let _ = writeln!(s, "Repetitions per column: {}\n", reps.join(", "));
        let head: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                if r.label == "Base" {
                    "Base".to_string()
                } else {
                    format!("N_in = {}", r.label)
                }
            })
            .collect();
        let _ = writeln!(s, "| Stage | {} |", head.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.rows.len()));
        let line = |name: &str, f: &dyn Fn(&BenchRow) -> String| {
            format!("| {name} | {} |\n", self.rows.iter().map(f).collect::<Vec<_>>().join(" | "))
        };
        s.push_str(&line("Encryption", &|r| r.encryption_ms.cell()));
        s.push_str(&line("Matching", &|r| r.matching_ms.cell()));
        s.push_str(&line("Network", &|r| r.network_ms.cell()));
        s.push_str(&line("Decryption", &|r| r.decryption_ms.cell()));
        s.push_str(&line("Total", &|r| r.total_ms.cell()));
        s.push_str(&line("Rotations / query", &|r| r.rotations.to_string()));
        s.push_str(&line("Rank-1", &|r| format!("{:.3}", r.rank1)));
        if self.with_prediction() {
            s.push_str(&line("Predicted matching (counts)", &|r| {
                r.predicted_ms.map_or("-".into(), |p| format!("{p:.2}"))
            }));
            s.push_str(&line("Predicted matching (model)", &|r| {
                r.model_ms.map_or("-".into(), |p| format!("{p:.2}"))
            }));
        }
        if let Some(n) = self.predicted_nin {
            let _ = writeln!(s, "\nModel-optimal N_in: {n}");
        }
        if !self.notes.is_empty() {
            s.push('\n');
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        let _ = writeln!(s, "\n{}", hardware_footer());
        s
    }
}

/// Host description appended to Markdown reports.
pub fn hardware_footer() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|c| {
            c.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "Hardware: {cpu}, {threads} hardware threads, {} build. Absolute milliseconds are specific to this \
         machine and build; compare orderings and ratios between columns, not raw values against other hosts.",
        if cfg!(debug_assertions) { "debug-assertion" } else { "release" }
    )
}
