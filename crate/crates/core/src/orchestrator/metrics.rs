use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

/// The three timed query categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    /// Anchor-map load, needs recognition ("Query A").
    AnchorLoad,
    /// General conversation ("Query B").
    General,
    /// Question about an object ("Query C").
    ObjectQuery,
}

impl QueryKind {
    pub const ALL: [QueryKind; 3] = [QueryKind::AnchorLoad, QueryKind::General, QueryKind::ObjectQuery];

    pub fn column(self) -> &'static str {
        match self {
            QueryKind::AnchorLoad => "Query A",
            QueryKind::General => "Query B",
            QueryKind::ObjectQuery => "Query C",
        }
    }
}

/// Timing breakdown of one query. `total_time` is always the sum of the
/// present components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub kind: QueryKind,
    pub or_time: Option<f64>,
    pub chatbot_time: Option<f64>,
    pub processing_time: f64,
    pub total_time: f64,
}

impl QueryMetrics {
    pub fn new(kind: QueryKind, or_time: Option<f64>, chatbot_time: Option<f64>, processing_time: f64) -> Self {
        let total_time = or_time.unwrap_or(0.0) + chatbot_time.unwrap_or(0.0) + processing_time;
        Self { kind, or_time, chatbot_time, processing_time, total_time }
    }

    pub fn vision_invoked(&self) -> bool {
        self.or_time.is_some()
    }
}

/// Per-query bookkeeping kept by a session for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub session: String,
    pub started_at: f64,
    /// When the masking filler went out, if one did.
    pub filler_at: Option<f64>,
    pub reply_at: f64,
    pub metrics: QueryMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: QueryKind,
    pub count: usize,
    pub mean_or: Option<f64>,
    pub mean_chatbot: Option<f64>,
    pub mean_processing: Option<f64>,
    pub mean_total: Option<f64>,
    pub stddev_total: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Means of the present fields and the sample standard deviation of totals
/// for all queries of `kind`.
pub fn aggregate_metrics(log: &[QueryMetrics], kind: QueryKind) -> KindSummary {
    let selected: Vec<&QueryMetrics> = log.iter().filter(|m| m.kind == kind).collect();
    let or: Vec<f64> = selected.iter().filter_map(|m| m.or_time).collect();
    let chat: Vec<f64> = selected.iter().filter_map(|m| m.chatbot_time).collect();
    let processing: Vec<f64> = selected.iter().map(|m| m.processing_time).collect();
    let totals: Vec<f64> = selected.iter().map(|m| m.total_time).collect();
    let mean_total = mean(&totals);
    let stddev_total = mean_total.map(|mu| {
        if totals.len() < 2 {
            0.0
        } else {
            (totals.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / (totals.len() - 1) as f64).sqrt()
        }
    });
    KindSummary {
        kind,
        count: selected.len(),
        mean_or: mean(&or),
        mean_chatbot: mean(&chat),
        mean_processing: mean(&processing),
        mean_total,
        stddev_total,
    }
}

/// Metrics appended by many sessions; per-session order is preserved.
#[derive(Debug, Clone, Default)]
pub struct SharedMetricsLog {
    inner: Arc<Mutex<Vec<(String, QueryMetrics)>>>,
}

impl SharedMetricsLog {
    pub fn append(&self, session: &str, metrics: QueryMetrics) {
        self.inner.lock().expect("metrics log poisoned").push((session.to_owned(), metrics));
    }

    pub fn snapshot(&self) -> Vec<(String, QueryMetrics)> {
        self.inner.lock().expect("metrics log poisoned").clone()
    }

    pub fn summaries(&self) -> Vec<KindSummary> {
        let all: Vec<QueryMetrics> = self.snapshot().into_iter().map(|(_, m)| m).collect();
        QueryKind::ALL.iter().map(|k| aggregate_metrics(&all, *k)).collect()
    }
}
