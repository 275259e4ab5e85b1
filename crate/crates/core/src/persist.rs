//! Checksummed JSON documents for fitted models.
//!
//! A document wraps its payload with a format tag, a kind, a version, the
//! feature schema hash and a SHA-256 of the canonical payload text. Any edit
//! to the payload is reported as an integrity error; a kind, version or
//! schema mismatch is a compatibility error.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;

pub const FORMAT: &str = "propfault-model";
pub const FORMAT_VERSION: u32 = 1;

/// A payload that can be stored as a document.
pub trait Persist: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn feature_schema(&self) -> &FeatureSchema;
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    kind: String,
    version: u32,
    schema_hash: String,
    checksum: String,
    payload: T,
}

fn digest(payload: &serde_json::Value) -> Result<String> {
    let text = serde_json::to_string(payload)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub fn to_document<T: Persist>(value: &T) -> Result<String> {
    let payload = serde_json::to_value(value)?;
    let env = Envelope {
        format: FORMAT.to_string(),
        kind: T::KIND.to_string(),
        version: FORMAT_VERSION,
        schema_hash: value.feature_schema().hash(),
        checksum: digest(&payload)?,
        payload,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_document<T: Persist>(text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Integrity(format!("malformed model document: {e}")))?;
    if env.format != FORMAT {
        return Err(Error::Compatibility(format!("not a model document (format `{}`)", env.format)));
    }
    if env.kind != T::KIND {
        return Err(Error::Compatibility(format!("expected a `{}` document, found `{}`", T::KIND, env.kind)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Compatibility(format!(
            "document version {} is not supported (expected {FORMAT_VERSION})",
            env.version
        )));
    }
    if digest(&env.payload)? != env.checksum {
        return Err(Error::Integrity("checksum mismatch; the document was modified or truncated".into()));
    }
    let value: T = serde_json::from_value(env.payload)
        .map_err(|e| Error::Compatibility(format!("payload does not match the `{}` layout: {e}", T::KIND)))?;
    if value.feature_schema().hash() != env.schema_hash {
        return Err(Error::Integrity("stored schema hash disagrees with the payload schema".into()));
    }
    Ok(value)
}

pub fn save<T: Persist>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_document(value)?)?;
    Ok(())
}

pub fn load<T: Persist>(path: &Path) -> Result<T> {
    let text = std::fs::read(path)?;
    let text = String::from_utf8(text).map_err(|_| Error::Integrity(format!("{} is not UTF-8", path.display())))?;
    from_document(&text)
}

/// Fails with a compatibility error unless both schemas hash equal.
pub fn check_schema(model: &FeatureSchema, features: &FeatureSchema) -> Result<()> {
    let (a, b) = (model.hash(), features.hash());
    if a != b {
        return Err(Error::Compatibility(format!("feature schema {b} does not match the model schema {a}")));
    }
    Ok(())
}
