fn main() {
    std::process::exit(pipeline_distill::cli::dispatch(std::env::args_os()));
}
