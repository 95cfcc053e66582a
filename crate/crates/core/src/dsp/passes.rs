use super::{Extremum, ExtremumKind, PassLabel};

pub const FIRST_PASSES: usize = 20;
pub const LAST_PASSES: usize = 20;

/// Labels the first `first_n` maxima `first20` and the last `last_n` maxima
/// `last20`. When the two groups overlap, `first20` wins, so no maximum is
/// labeled twice. Each minimum takes the label of the closest maximum before
/// it (unlabeled when there is none).
pub fn select_passes(extrema: &[Extremum], first_n: usize, last_n: usize) -> Vec<Extremum> {
    let maxima_total = extrema.iter().filter(|e| e.kind == ExtremumKind::Maxima).count();
    let last_from = maxima_total.saturating_sub(last_n);
    let mut rank = 0;
    let mut previous_max_label = PassLabel::Unlabeled;
    extrema
        .iter()
        .map(|e| {
            let mut e = e.clone();
            match e.kind {
                ExtremumKind::Maxima => {
                    e.label = if rank < first_n {
                        PassLabel::First20
                    } else if rank >= last_from {
                        PassLabel::Last20
                    } else {
                        PassLabel::Unlabeled
                    };
                    rank += 1;
                    previous_max_label = e.label;
                }
                ExtremumKind::Minima => e.label = previous_max_label,
            }
            e
        })
        .collect()
}
