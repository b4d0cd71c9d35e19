#include "clora/cli.hpp"

int main(int argc, char** argv) { return clora::cli::dispatch(argc, argv); }
