#include "rcp/rcp.hpp"
int main() { return 0; }
