//! Command-line surface. Returns a process exit code.

pub fn run() -> i32 {
    eprintln!("cli not wired yet");
    1
}
