#include <mblkam/cli.hpp>

int main(int argc, char** argv) { return mblkam::cli::run_command(argc, argv); }
