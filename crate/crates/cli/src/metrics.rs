//! Per-epoch metrics logging: one machine-readable `key=value` line per
//! epoch, plus a final per-fold summary record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use diffpool_core::train::{EpochObserver, EpochRecord, FoldResult};

use crate::exit::Result;

pub struct MetricsWriter {
    out: BufWriter<File>,
    epoch_started: Instant,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
            epoch_started: Instant::now(),
        })
    }

    pub fn finish(mut self, result: &FoldResult) -> Result<()> {
        writeln!(
            self.out,
            "fold={} best_epoch={} test_accuracy={:.6}",
            result.fold_index, result.best_epoch, result.test_accuracy
        )?;
        self.out.flush()?;
        Ok(())
    }
}

impl EpochObserver for MetricsWriter {
    fn on_epoch(&mut self, _fold: usize, record: &EpochRecord) {
        let seconds = self.epoch_started.elapsed().as_secs_f64();
        self.epoch_started = Instant::now();
        let _ = writeln!(
            self.out,
            "epoch={} train_loss={:.6} val_loss={:.6} lp_loss={:.6} ent_loss={:.6} seconds={:.3}",
            record.epoch, record.train_loss, record.val_loss, record.lp_loss, record.ent_loss, seconds
        );
    }
}
