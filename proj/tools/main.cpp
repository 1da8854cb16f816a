#include "pirsurf/cli.hpp"

int main(int argc, char** argv) { return pirsurf::dispatch(argc, argv); }
