//! Analysis: confidence histograms, linear CKA, GIST distance histograms,
//! 2-D t-SNE embeddings and per-class diagnostics.

pub mod cka;
pub mod confidence;
pub mod gist;
pub mod hist;
pub mod perclass;
pub mod plot;
pub mod tsne;

use std::io::Write;
use std::path::Path;

pub use cka::{cka_heatmap, cka_matrix, layer_features, linear_cka, FeatureMatrix};
pub use confidence::{confidence_histogram, max_confidence};
pub use gist::{gist_distance_histogram, l2_normalize, Gist, GistConfig};
pub use hist::Histogram;
pub use perclass::{per_class_report, teacher_frequency, PerClassReport};
pub use tsne::{embed_2d, TsneConfig};

use crate::error::Result;

/// Tab-separated table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join("\t"))?;
    for r in rows {
        writeln!(f, "{}", r.join("\t"))?;
    }
    f.flush()?;
    Ok(())
}

/// `bin_lo  bin_hi  count` rows.
pub fn histogram_rows(h: &Histogram) -> Vec<Vec<String>> {
    h.counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![format!("{:.6}", h.edges[i]), format!("{:.6}", h.edges[i + 1]), c.to_string()])
        .collect()
}
