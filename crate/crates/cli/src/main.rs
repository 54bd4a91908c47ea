fn main() {
    std::process::exit(randstab_cli::dispatch(std::env::args()));
}
