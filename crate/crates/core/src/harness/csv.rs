//! Trace CSV: columns `k, epoch, grad_evals, loss, grad_norm_sq, gamma,
//! eta, curv_inner`; values that were not logged are empty fields.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::Result;
use crate::optimizers::{TraceRecord, TraceSink};

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    if records.is_empty() {
        writer.write_record(HEADER)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let records = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(records)
}

const HEADER: [&str; 8] = [
    "k",
    "epoch",
    "grad_evals",
    "loss",
    "grad_norm_sq",
    "gamma",
    "eta",
    "curv_inner",
];

/// Streams records to a CSV file as they are produced.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    rows: u64,
}

impl CsvSink<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(CsvSink::new(File::create(path)?))
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        CsvSink {
            writer: csv::Writer::from_writer(out),
            rows: 0,
        }
    }

    pub fn finish(mut self) -> Result<W> {
        if self.rows == 0 {
            self.writer.write_record(HEADER)?;
        }
        self.writer
            .into_inner()
            .map_err(|e| crate::Error::Io(e.into_error()))
    }
}

impl<W: Write> TraceSink for CsvSink<W> {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.rows += 1;
        Ok(())
    }
}
