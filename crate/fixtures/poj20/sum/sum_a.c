#include <stdio.h>

int main(void) {
  int n = 100;
  int total = 0;
  for (int i = 1; i <= n; i++) {
    total = total + i;
  }
  printf("%d\n", total);
  return 0;
}
