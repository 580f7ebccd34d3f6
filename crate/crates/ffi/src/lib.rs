//! C ABI over `aql-core`.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`AqlStatus`]; on anything but
//!   `AQL_STATUS_OK` a message is available from [`aql_last_error`] on the same
//!   thread until the next call into this library.
//! * Strings passed in are NUL-terminated UTF-8. Strings handed out through
//!   `char **out` parameters are owned by the caller and released with
//!   [`aql_string_free`].
//! * Structured results (extractions, parsed SERPs) are JSON documents.
//! * `AqlRegistry` is opaque; create it with [`aql_registry_load`] or
//!   [`aql_registry_from_toml`] and release it with [`aql_registry_free`].
//!   A registry may be shared by threads for concurrent reads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aql_core::corpus::ids;
use aql_core::extract::extract_url;
use aql_core::providers::{detect_search_interface, load_registry};
use aql_core::serp::parse_serp;
use aql_core::timestamp::Timestamp14;
use aql_core::ProviderRegistry;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was well-formed but unacceptable (bad timestamp,
    /// invalid registry, unknown provider).
    InvalidArgument = 3,
    /// A file could not be read.
    Io = 4,
    /// The input was valid but nothing matched (no query in the URL, no
    /// applicable SERP parser).
    NoMatch = 5,
    /// The library panicked; the call had no effect.
    Internal = 6,
}

/// Opaque provider registry.
pub struct AqlRegistry {
    inner: ProviderRegistry,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|b| *b != 0);
    let message = CString::new(bytes).expect("NUL bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(AqlStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: AqlStatus, message: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, message.into()))
}

/// Runs `body`, converting failures and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> AqlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AqlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error (panic)");
            AqlStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return fail(AqlStatus::NullArgument, format!("`{name}` is null"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| Failure(AqlStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn bytes_arg<'a>(ptr: *const u8, len: usize, name: &str) -> FfiResult<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return fail(AqlStatus::NullArgument, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn registry_arg<'a>(ptr: *const AqlRegistry) -> FfiResult<&'a ProviderRegistry> {
    if ptr.is_null() {
        return fail(AqlStatus::NullArgument, "`registry` is null");
    }
    Ok(&(*ptr).inner)
}

fn timestamp_arg(raw: &str) -> FfiResult<Timestamp14> {
    Timestamp14::parse(raw).map_err(|e| Failure(AqlStatus::InvalidArgument, format!("timestamp: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return fail(AqlStatus::NullArgument, "output pointer is null");
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> FfiResult<()> {
    let owned = CString::new(value).map_err(|_| Failure(AqlStatus::Internal, "result contains a NUL byte".into()))?;
    write_out(out, owned.into_raw())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn aql_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn aql_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed before.
#[no_mangle]
pub unsafe extern "C" fn aql_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a TOML registry file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_registry_load(path: *const c_char, out: *mut *mut AqlRegistry) -> AqlStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let registry = load_registry(Path::new(path)).map_err(|e| {
            let status = match e {
                aql_core::providers::RegistryError::Io { .. } => AqlStatus::Io,
                _ => AqlStatus::InvalidArgument,
            };
            Failure(status, e.to_string())
        })?;
        write_out(out, Box::into_raw(Box::new(AqlRegistry { inner: registry })))
    })
}

/// Parses and validates registry TOML held in memory.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_registry_from_toml(toml: *const c_char, out: *mut *mut AqlRegistry) -> AqlStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let registry = ProviderRegistry::from_toml_str(text, Path::new("<memory>"))
            .map_err(|e| Failure(AqlStatus::InvalidArgument, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(AqlRegistry { inner: registry })))
    })
}

/// Releases a registry. Null is ignored.
///
/// # Safety
/// `registry` must come from this library and not have been freed before.
#[no_mangle]
pub unsafe extern "C" fn aql_registry_free(registry: *mut AqlRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Number of providers, excluded ones included; 0 for null.
///
/// # Safety
/// `registry` must be null or a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn aql_registry_len(registry: *const AqlRegistry) -> usize {
    registry.as_ref().map_or(0, |r| r.inner.len())
}

fn provider<'a>(registry: &'a ProviderRegistry, name: &str) -> FfiResult<&'a aql_core::ProviderConfig> {
    registry.get(name).ok_or_else(|| Failure(AqlStatus::InvalidArgument, format!("unknown provider {name:?}")))
}

/// Runs the provider's parser chains over `url` and writes the extraction
/// as JSON (`query`, `page`, `offset`, `matched_parser`). Returns
/// `AQL_STATUS_NO_MATCH` when no field could be extracted.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_extract(
    registry: *const AqlRegistry,
    provider_name: *const c_char,
    url: *const c_char,
    out_json: *mut *mut c_char,
) -> AqlStatus {
    guard(|| {
        let registry = registry_arg(registry)?;
        let provider = provider(registry, str_arg(provider_name, "provider")?)?;
        let url = str_arg(url, "url")?;
        let Some(result) = extract_url(provider.into(), url) else {
            return fail(AqlStatus::NoMatch, format!("no parser of {:?} matched {url}", provider.name));
        };
        write_string(out_json, serde_json::to_string(&result).expect("extraction serializes"))
    })
}

/// Parses archived SERP bytes with the provider's SERP parser chain and
/// writes the result as JSON (`interpreted_query`, `results`,
/// `matched_spec`). `url` is the SERP's original URL, used to resolve
/// relative links and evaluate gates. Returns `AQL_STATUS_NO_MATCH` when no spec
/// applies.
///
/// # Safety
/// `html` must point to `html_len` readable bytes; other pointers as for
/// [`aql_extract`].
#[no_mangle]
pub unsafe extern "C" fn aql_parse_serp(
    registry: *const AqlRegistry,
    provider_name: *const c_char,
    html: *const u8,
    html_len: usize,
    url: *const c_char,
    out_json: *mut *mut c_char,
) -> AqlStatus {
    guard(|| {
        let registry = registry_arg(registry)?;
        let provider = provider(registry, str_arg(provider_name, "provider")?)?;
        let html = bytes_arg(html, html_len, "html")?;
        let url = str_arg(url, "url")?;
        let Some(parsed) = parse_serp(html, url, &provider.serp_parsers) else {
            return fail(AqlStatus::NoMatch, format!("no SERP parser of {:?} applies", provider.name));
        };
        write_string(out_json, serde_json::to_string(&parsed).expect("parsed SERP serializes"))
    })
}

/// Query id for a capture: version-5 UUID, hyphenated lowercase.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_query_id(
    url: *const c_char,
    timestamp: *const c_char,
    out: *mut *mut c_char,
) -> AqlStatus {
    guard(|| {
        let url = str_arg(url, "url")?;
        let ts = timestamp_arg(str_arg(timestamp, "timestamp")?)?;
        write_string(out, ids::query_id(url, ts.as_str()).to_string())
    })
}

/// Result id for the document at `rank` of the SERP captured at
/// `query_timestamp`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_result_id(
    doc_url: *const c_char,
    query_timestamp: *const c_char,
    rank: u64,
    out: *mut *mut c_char,
) -> AqlStatus {
    guard(|| {
        let url = str_arg(doc_url, "doc_url")?;
        let ts = timestamp_arg(str_arg(query_timestamp, "query_timestamp")?)?;
        if rank == 0 {
            return fail(AqlStatus::InvalidArgument, "rank is 1-based");
        }
        write_string(out, ids::result_id(url, ts.as_str(), rank).to_string())
    })
}

/// Wayback snapshot URL; a null `base` selects the public Wayback Machine.
///
/// # Safety
/// `base` must be null or NUL-terminated; other strings NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_wayback_url(
    base: *const c_char,
    timestamp: *const c_char,
    url: *const c_char,
    out: *mut *mut c_char,
) -> AqlStatus {
    guard(|| {
        let base = if base.is_null() { None } else { Some(str_arg(base, "base")?) };
        let ts = timestamp_arg(str_arg(timestamp, "timestamp")?)?;
        let url = str_arg(url, "url")?;
        write_string(out, ids::wayback_url(base, ts.as_str(), url))
    })
}

/// Whether a landing page looks like it offers a search interface.
///
/// # Safety
/// `html` must point to `html_len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aql_detect_search_interface(html: *const u8, html_len: usize, out: *mut bool) -> AqlStatus {
    guard(|| {
        let html = bytes_arg(html, html_len, "html")?;
        write_out(out, detect_search_interface(html))
    })
}
