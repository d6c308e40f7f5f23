use super::params::ParamStore;

/// Worst agreement between analytic and central-difference gradients for one entry.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients stored in `params` against central differences of `loss_fn`.
pub fn grad_check<F>(params: &ParamStore, h: f64, mut loss_fn: F) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut probe = params.clone();
    let mut entries = Vec::with_capacity(params.len());
    for (k, entry) in params.entries().iter().enumerate() {
        let mut worst = GradCheckEntry {
            name: entry.name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..entry.value.len() {
            let theta = entry.value.values()[i];
            probe.entries_mut()[k].value.values_mut()[i] = theta + h;
            let plus = loss_fn(&probe);
            probe.entries_mut()[k].value.values_mut()[i] = theta - h;
            let minus = loss_fn(&probe);
            probe.entries_mut()[k].value.values_mut()[i] = theta;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = entry.gradient.values()[i];
            let err = relative_error(analytic, numeric);
            if err > worst.max_rel_error || i == 0 {
                worst = GradCheckEntry {
                    name: entry.name.clone(),
                    max_rel_error: err,
                    worst_index: i,
                    analytic,
                    numeric,
                };
            }
        }
        entries.push(worst);
    }
    GradCheckReport { entries }
}
