use serde_json::Value;

/// Numeric CSV with a fixed header; floats are written with `{:e}`, which
/// round-trips exactly.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("writing to memory");
        Self { w, width: header.len() }
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.width, "row width differs from header");
        self.w.write_record(values.iter().map(|v| format!("{v:e}"))).expect("writing to memory");
    }

    pub fn finish(self) -> String {
        let bytes = self.w.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("csv output is ascii")
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}
