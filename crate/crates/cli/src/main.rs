fn main() {
    dpim_cli::run()
}
