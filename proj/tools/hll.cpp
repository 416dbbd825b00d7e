#include <hll/app.hpp>

int main(int argc, char** argv) { return hll::run_cli(argc, argv); }
