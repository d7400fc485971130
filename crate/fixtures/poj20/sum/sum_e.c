#include <stdio.h>

int main(void) {
  int n = 100;
  int res = n * (n + 1) / 2;
  printf("%d\n", res);
  return 0;
}
