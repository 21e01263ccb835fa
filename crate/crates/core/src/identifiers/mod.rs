//! Cookie store construction and the identifier filter chain.

pub mod filters;
pub mod keywords;
pub mod pipeline;
pub mod similarity;
pub mod store;

pub use filters::{
    filter_charset, filter_cross_user, filter_keywords, filter_length, filter_session, filter_similarity,
    split_on_delimiters,
};
pub use keywords::KeywordBlocklist;
pub use pipeline::{
    extract_identifiers, extract_user_identifiers, write_identifiers_jsonl, Identifier, IdentifierRecord,
    IdentifierSet,
};
pub use similarity::ratcliff_obershelp;
pub use store::{build_cookie_store, CookieStore};
