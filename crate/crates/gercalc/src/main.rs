fn main() {
    // CLI wiring lands once the algebra modules are in place.
    eprintln!("gercalc: no subcommands wired yet");
    std::process::exit(2);
}
