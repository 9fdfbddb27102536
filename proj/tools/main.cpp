#include "convseg/cli.hpp"

int main(int argc, char** argv) { return convseg::cli::run(argc, argv); }
