#include <stdio.h>

int main(void) {
  int n = 97;
  if (n % 2 == 0) {
    printf("0\n");
    return 0;
  }
  for (int d = 3; d * d <= n; d += 2) {
    if (n % d == 0) {
      printf("0\n");
      return 0;
    }
  }
  printf("1\n");
  return 0;
}
