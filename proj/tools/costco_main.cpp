#include "costco/cli.hpp"

int main(int argc, char** argv) { return costco::run_cli(argc, argv); }
