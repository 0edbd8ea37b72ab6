/// Flat `key=value` rendering of a report.
pub trait KeyValues {
    fn pairs(&self) -> Vec<(&'static str, String)>;

    fn to_kv_string(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

pub(crate) fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}
