//! Network description in TOML, one `[transport]` and one `[distribution]`
//! section. Unknown keys are rejected.

use std::path::Path;

use evjrs_core::netmodel::{validate_network, NetError, Network};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};

pub fn parse_network(path: &Path, text: &str) -> Result<Network> {
    let net: Network = toml::from_str(text)
        .map_err(|e| Error::format(path, e.span().map(|s| s.start), e.message().to_string()))?;
    let report = validate_network(&net.transport, &net.distribution);
    if !report.is_empty() {
        return Err(NetError::Invalid(report).into());
    }
    Ok(net)
}

pub fn render_network(net: &Network) -> String {
    toml::to_string(net).expect("network serializes to TOML")
}

pub fn read_network(path: &Path) -> Result<Network> {
    parse_network(path, &read_text(path)?)
}

pub fn write_network(path: &Path, net: &Network) -> Result<()> {
    write_bytes(path, render_network(net).as_bytes())
}
