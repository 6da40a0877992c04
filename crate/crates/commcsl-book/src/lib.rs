//! Doc-test shim for the user guide.
//!
//! Each chapter of the book (in `book/src/`) is included here as module
//! documentation, so every fenced Rust snippet in the guide runs under
//! `cargo test` and the book cannot drift from the library.

// Chapter includes are added as the corresponding chapters are written.
